#include <catch2/catch_amalgamated.hpp>

#include <sys/socket.h>

#include "holocodec/evaluation.hpp"
#include "test_helpers.hpp"

using namespace holocodec;
using holotest::random_image;

namespace {

OpticsConfig demo_optics() {
    OpticsConfig o;
    o.wavelength = 520e-9;
    o.pixel_pitch = 6.4e-6;
    o.distance = 0.02;
    o.pad_factor = 2.0;
    return o;
}

CodecProfile demo_profile() {
    CodecProfile p;
    p.f_bottom = 4;
    p.f_top = 8;
    p.res_blocks = 1;
    p.channels = 4;
    p.latent_dim = 4;
    p.k_bottom = 8;
    p.k_top = 8;
    return p;
}

CodebookRegistry demo_registry(uint64_t seed, size_t d = 4) {
    CodebookRegistry reg;
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    for (size_t k : {4u, 8u}) {
        for (uint8_t ch : {0, 1, 2}) {
            for (bool top : {false, true}) {
                Codebook b(k, d);
                for (double& x : b.vectors) x = n(rng);
                reg.insert(book_channel(ch, top), k, std::move(b));
            }
        }
    }
    return reg;
}

}  // namespace

TEST_CASE("loopback send/receive matches the local decode bit for bit") {
    CodecModel model(demo_profile(), demo_optics(), LossWeights{}, 1);
    CodebookRegistry reg = demo_registry(2);
    HologramPipeline pipe;
    Rng rng(3);

    int fds[2];
    REQUIRE(socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
    FdStream sender(fds[0]), receiver(fds[1]);

    for (int t = 0; t < 5; ++t) {
        Image img;
        img.h = 16;
        img.w = 32;
        img.channels = 1;
        RGrid g = random_image(16, 32, rng);
        img.data = g.v;

        QosSelection qos{8, 8};
        size_t wire = transport_send(model, img, qos, reg, pipe, sender);

        // wire bytes = frame header + serialized stream
        HoloBitstream local = compress_channel(model, g, 0, reg.lookup(book_channel(0, false), 8),
                                               reg.lookup(book_channel(0, true), 8), pipe);
        auto local_bytes = serialize_stream(local);
        REQUIRE(wire == 4 + local_bytes.size());

        auto got = transport_receive(model, reg, receiver);
        REQUIRE(got.has_value());
        REQUIRE(got->ok);
        PhaseMap local_phase = decompress_channel(model, local, reg.lookup(book_channel(0, false), 8),
                                                  reg.lookup(book_channel(0, true), 8));
        REQUIRE(got->phase.data == local_phase.data);
    }
}

TEST_CASE("a corrupted frame is rejected and the connection stays usable") {
    CodecModel model(demo_profile(), demo_optics(), LossWeights{}, 1);
    CodebookRegistry reg = demo_registry(2);
    HologramPipeline pipe;
    Rng rng(5);
    RGrid g = random_image(16, 32, rng);

    HoloBitstream s = compress_channel(model, g, 0, reg.lookup(book_channel(0, false), 8),
                                       reg.lookup(book_channel(0, true), 8), pipe);
    auto good = serialize_stream(s);
    auto bad = good;
    bad[bad.size() / 2] ^= 0x01;

    MemStream wire;
    write_frame(wire, bad);
    write_frame(wire, good);

    auto first = transport_receive(model, reg, wire);
    REQUIRE(first.has_value());
    REQUIRE_FALSE(first->ok);
    REQUIRE(first->error.find("checksum") != std::string::npos);

    auto second = transport_receive(model, reg, wire);
    REQUIRE(second.has_value());
    REQUIRE(second->ok);

    REQUIRE_FALSE(transport_receive(model, reg, wire).has_value());  // clean end of stream
}

TEST_CASE("missing registry entries surface as registry misses") {
    CodecModel model(demo_profile(), demo_optics(), LossWeights{}, 1);
    CodebookRegistry reg = demo_registry(2);
    HologramPipeline pipe;
    Rng rng(7);
    Image img;
    img.h = 16;
    img.w = 32;
    img.channels = 1;
    img.data = random_image(16, 32, rng).v;

    MemStream wire;
    QosSelection unknown{16, 16};  // size id never exported
    REQUIRE_THROWS_AS(transport_send(model, img, unknown, reg, pipe, wire), RegistryMissError);
}

TEST_CASE("fuzzed frames never crash the receiver") {
    CodecModel model(demo_profile(), demo_optics(), LossWeights{}, 1);
    CodebookRegistry reg = demo_registry(2);
    HologramPipeline pipe;
    Rng rng(9);
    RGrid g = random_image(16, 32, rng);
    auto valid = serialize_stream(compress_channel(model, g, 0, reg.lookup(book_channel(0, false), 8),
                                                   reg.lookup(book_channel(0, true), 8), pipe));

    std::uniform_int_distribution<int> byte(0, 255);
    for (int t = 0; t < 3000; ++t) {
        std::vector<uint8_t> payload;
        if (t % 2 == 0) {
            payload.resize(t % 97);
            for (auto& b : payload) b = static_cast<uint8_t>(byte(rng));
        } else {
            payload = valid;
            std::uniform_int_distribution<size_t> pos(0, payload.size() - 1);
            payload[pos(rng)] ^= static_cast<uint8_t>(byte(rng));
        }
        MemStream wire;
        write_frame(wire, payload);
        auto got = transport_receive(model, reg, wire);
        REQUIRE(got.has_value());
        if (got->ok) got->phase.validate();
    }
}

TEST_CASE("truncated frames and oversized prefixes are protocol errors") {
    CodecModel model(demo_profile(), demo_optics(), LossWeights{}, 1);
    CodebookRegistry reg = demo_registry(2);

    MemStream truncated;
    std::vector<uint8_t> hdr;
    put_u32(hdr, 100);  // promises 100 bytes, delivers none
    truncated.write(hdr.data(), hdr.size());
    REQUIRE_THROWS_AS(transport_receive(model, reg, truncated), CorruptStreamError);

    MemStream oversized;
    hdr.clear();
    put_u32(hdr, 0xffffffffu);
    oversized.write(hdr.data(), hdr.size());
    REQUIRE_THROWS_AS(transport_receive(model, reg, oversized), CorruptStreamError);
}

TEST_CASE("registry directory round-trips with checksums") {
    CodebookRegistry reg = demo_registry(11);
    std::string root = "/tmp/holocodec_test_books";
    std::filesystem::remove_all(root);
    reg.save_dir(root);
    CodebookRegistry back = CodebookRegistry::load_dir(root);
    REQUIRE(back.size() == reg.size());
    for (size_t k : {4u, 8u})
        for (uint8_t ch : {0, 1, 2})
            for (bool top : {false, true}) {
                const Codebook& a = reg.lookup(book_channel(ch, top), k);
                const Codebook& b = back.lookup(book_channel(ch, top), k);
                REQUIRE(a.k == b.k);
                for (size_t i = 0; i < a.vectors.size(); ++i)
                    REQUIRE(b.vectors[i] == static_cast<double>(static_cast<float>(a.vectors[i])));
            }
    REQUIRE_THROWS_AS(back.lookup(book_channel(9, false), 4), RegistryMissError);
    std::filesystem::remove_all(root);
}
