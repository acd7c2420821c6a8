#ifndef HOLOCODEC_TRANSPORT_HPP
#define HOLOCODEC_TRANSPORT_HPP

#include <filesystem>
#include <unistd.h>

#include "holocodec/image_io.hpp"
#include "holocodec/pipeline.hpp"

namespace holocodec {

// Reliable byte stream the frame protocol runs over. Implementations wrap a
// socket, a file descriptor pair, or an in-memory buffer.
class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual size_t write(const uint8_t* data, size_t n) = 0;
    // reads exactly n bytes or fewer at end of stream
    virtual size_t read(uint8_t* data, size_t n) = 0;
};

class FdStream : public ByteStream {
public:
    explicit FdStream(int fd, bool owned = true) : fd_(fd), owned_(owned) {}
    ~FdStream() override {
        if (owned_ && fd_ >= 0) ::close(fd_);
    }
    FdStream(const FdStream&) = delete;
    FdStream& operator=(const FdStream&) = delete;

    size_t write(const uint8_t* data, size_t n) override {
        size_t done = 0;
        while (done < n) {
            ssize_t w = ::write(fd_, data + done, n - done);
            if (w <= 0) return done;  // caller reports the partial count
            done += static_cast<size_t>(w);
        }
        return done;
    }
    size_t read(uint8_t* data, size_t n) override {
        size_t done = 0;
        while (done < n) {
            ssize_t r = ::read(fd_, data + done, n - done);
            if (r <= 0) break;
            done += static_cast<size_t>(r);
        }
        return done;
    }

private:
    int fd_;
    bool owned_;
};

class MemStream : public ByteStream {
public:
    size_t write(const uint8_t* data, size_t n) override {
        buf_.insert(buf_.end(), data, data + n);
        return n;
    }
    size_t read(uint8_t* data, size_t n) override {
        size_t take = std::min(n, buf_.size() - rpos_);
        std::memcpy(data, buf_.data() + rpos_, take);
        rpos_ += take;
        return take;
    }
    const std::vector<uint8_t>& buffer() const { return buf_; }
    std::vector<uint8_t>& buffer() { return buf_; }

private:
    std::vector<uint8_t> buf_;
    size_t rpos_ = 0;
};

// 32-bit length prefix, then the payload (one serialized HoloBitstream).
inline constexpr uint32_t kMaxFrameBytes = 1u << 26;  // refuse absurd allocations from hostile peers

inline size_t write_frame(ByteStream& stream, const std::vector<uint8_t>& payload) {
    if (payload.size() > kMaxFrameBytes) throw ConfigError("frame exceeds the protocol size cap");
    std::vector<uint8_t> header;
    put_u32(header, static_cast<uint32_t>(payload.size()));
    size_t a = stream.write(header.data(), header.size());
    if (a != header.size()) throw IoError("connection failed after " + std::to_string(a) + " bytes");
    size_t b = stream.write(payload.data(), payload.size());
    if (b != payload.size())
        throw IoError("connection failed after " + std::to_string(a + b) + " bytes");
    return a + b;
}

// Reads one frame. Returns false at a clean end of stream; throws on a
// truncated frame or an oversized length prefix.
inline bool read_frame(ByteStream& stream, std::vector<uint8_t>& payload) {
    uint8_t hdr[4];
    size_t got = stream.read(hdr, 4);
    if (got == 0) return false;
    if (got != 4) throw CorruptStreamError("truncated frame header");
    uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(hdr[i]) << (8 * i);
    if (len > kMaxFrameBytes) throw CorruptStreamError("frame length exceeds protocol cap");
    payload.resize(len);
    if (stream.read(payload.data(), len) != len) throw CorruptStreamError("truncated frame payload");
    return true;
}

// Registry channel-id convention: each wavelength channel owns two book
// slots, even ids for the bottom level and odd ids for the top level.
inline uint8_t book_channel(uint8_t wavelength_channel, bool top_level) {
    return static_cast<uint8_t>(2 * wavelength_channel + (top_level ? 1 : 0));
}

// Pre-distributed codebooks, keyed by (channel id, codebook size).
class CodebookRegistry {
public:
    void insert(uint8_t channel, size_t k, Codebook book) { books_[{channel, k}] = std::move(book); }

    const Codebook& lookup(uint8_t channel, size_t k) const {
        auto it = books_.find({channel, k});
        if (it == books_.end())
            throw RegistryMissError("no codebook for channel " + std::to_string(channel) + " size " +
                                    std::to_string(k));
        return it->second;
    }

    bool contains(uint8_t channel, size_t k) const { return books_.count({channel, k}) != 0; }
    size_t size() const { return books_.size(); }

    // Directory layout: <root>/<channel>/<K>.rvqc (file checksums verified on load).
    static CodebookRegistry load_dir(const std::string& root) {
        namespace fs = std::filesystem;
        CodebookRegistry reg;
        for (const auto& chan_dir : fs::directory_iterator(root)) {
            if (!chan_dir.is_directory()) continue;
            uint8_t channel = static_cast<uint8_t>(std::stoul(chan_dir.path().filename().string()));
            for (const auto& f : fs::directory_iterator(chan_dir.path())) {
                if (f.path().extension() != ".rvqc") continue;
                size_t k = std::stoul(f.path().stem().string());
                uint8_t file_channel = 0;
                Codebook book = load_codebook(f.path().string(), &file_channel);
                if (book.k != k || file_channel != channel)
                    throw CorruptStreamError("codebook file " + f.path().string() + " disagrees with its location");
                reg.insert(channel, k, std::move(book));
            }
        }
        return reg;
    }

    void save_dir(const std::string& root) const {
        namespace fs = std::filesystem;
        for (const auto& [key, book] : books_) {
            fs::path dir = fs::path(root) / std::to_string(key.first);
            fs::create_directories(dir);
            save_codebook((dir / (std::to_string(key.second) + ".rvqc")).string(), book, key.first);
        }
    }

private:
    std::map<std::pair<uint8_t, size_t>, Codebook> books_;
};

// There are two codebook levels per channel; sizes step together on the wire.
struct QosSelection {
    size_t k_bottom = 0, k_top = 0;
};

// Compresses each channel with the registry codebooks for the requested QoS
// size, frames, writes. Returns bytes put on the wire.
inline size_t transport_send(const CodecModel& model, const Image& image, const QosSelection& qos,
                             const CodebookRegistry& registry, const HologramPipeline& pipe, ByteStream& stream) {
    for (size_t c = 0; c < image.channels; ++c) {
        auto channel = static_cast<uint8_t>(c);
        if (!registry.contains(book_channel(channel, false), qos.k_bottom) ||
            !registry.contains(book_channel(channel, true), qos.k_top))
            throw RegistryMissError("registry lacks channel " + std::to_string(c) + " at the requested size");
    }
    size_t total = 0;
    for (size_t c = 0; c < image.channels; ++c) {
        auto channel = static_cast<uint8_t>(c);
        HoloBitstream s = compress_channel(model, image.channel(c), channel,
                                           registry.lookup(book_channel(channel, false), qos.k_bottom),
                                           registry.lookup(book_channel(channel, true), qos.k_top), pipe);
        total += write_frame(stream, serialize_stream(s));
    }
    return total;
}

struct ReceivedFrame {
    bool ok = false;          // checksum/structure verdict; connection stays usable either way
    std::string error;
    uint8_t channel_id = 0;
    PhaseMap phase;
};

// Reads one frame, validates, decodes with the registry codebook named in
// the header. Payload bytes are data only; nothing in them is executed.
inline std::optional<ReceivedFrame> transport_receive(const CodecModel& model, const CodebookRegistry& registry,
                                                      ByteStream& stream) {
    std::vector<uint8_t> payload;
    if (!read_frame(stream, payload)) return std::nullopt;
    ReceivedFrame out;
    try {
        HoloBitstream s = parse_stream(payload);
        out.channel_id = s.channel_id;
        const Codebook& bb = registry.lookup(book_channel(s.channel_id, false), 1u << s.log2_k_bottom);
        const Codebook& bt = registry.lookup(book_channel(s.channel_id, true), 1u << s.log2_k_top);
        out.phase = decompress_channel(model, s, bb, bt);
        out.ok = true;
    } catch (const Error& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

}  // namespace holocodec

#endif
