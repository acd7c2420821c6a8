#ifndef HOLOCODEC_IMAGE_IO_HPP
#define HOLOCODEC_IMAGE_IO_HPP

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "holocodec/common.hpp"
#include "holocodec/grid.hpp"

namespace holocodec {

// Planar image, values in [0, 1]. channels is 1 (gray) or 3 (RGB).
struct Image {
    size_t h = 0, w = 0;
    size_t channels = 1;
    std::vector<double> data;  // channel-major: data[c * h * w + y * w + x]

    double& at(size_t c, size_t y, size_t x) { return data[(c * h + y) * w + x]; }
    double at(size_t c, size_t y, size_t x) const { return data[(c * h + y) * w + x]; }

    RGrid channel(size_t c) const {
        RGrid g(h, w);
        std::copy(data.begin() + static_cast<long>(c * h * w), data.begin() + static_cast<long>((c + 1) * h * w),
                  g.v.begin());
        return g;
    }
};

namespace detail {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

// Reads an 8- or 16-bit grayscale or RGB PNG. Raw sample values are scaled to
// [0, 1]; no gamma or colorspace transform is applied.
inline Image load_png(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<std::vector<png_byte>> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // stream is big-endian; we want host order
    png_read_update_info(png, info);

    depth = png_get_bit_depth(png, info);
    size_t nch = png_get_channels(png, info);
    if (nch != 1 && nch != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": unsupported channel count " + std::to_string(nch));
    }

    size_t rowbytes = png_get_rowbytes(png, info);
    rows.assign(h, std::vector<png_byte>(rowbytes));
    std::vector<png_bytep> rowptrs(h);
    for (size_t y = 0; y < h; ++y) rowptrs[y] = rows[y].data();
    png_read_image(png, rowptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img;
    img.h = h;
    img.w = w;
    img.channels = nch;
    img.data.resize(nch * img.h * img.w);
    const double scale = depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (size_t y = 0; y < h; ++y) {
        const png_byte* row = rows[y].data();
        for (size_t x = 0; x < w; ++x) {
            for (size_t c = 0; c < nch; ++c) {
                double v;
                if (depth == 16) {
                    uint16_t s;
                    std::memcpy(&s, row + 2 * (x * nch + c), 2);
                    v = s * scale;
                } else {
                    v = row[x * nch + c] * scale;
                }
                img.at(c, y, x) = v;
            }
        }
    }
    return img;
}

// Writes a PNG, clamping samples to [0, 1]. bit_depth is 8 or 16.
inline void save_png(const std::string& path, const Image& img, int bit_depth = 8) {
    if (img.channels != 1 && img.channels != 3) throw IoError("save_png: 1 or 3 channels only");
    if (bit_depth != 8 && bit_depth != 16) throw IoError("save_png: bit depth must be 8 or 16");

    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode " + path);
    }
    png_init_io(png, f.get());
    int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), bit_depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);

    const double peak = bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<png_byte> row(img.w * img.channels * (bit_depth / 8));
    for (size_t y = 0; y < img.h; ++y) {
        for (size_t x = 0; x < img.w; ++x) {
            for (size_t c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                auto q = static_cast<uint32_t>(std::lround(v * peak));
                if (bit_depth == 16) {
                    uint16_t s = static_cast<uint16_t>(q);
                    std::memcpy(row.data() + 2 * (x * img.channels + c), &s, 2);
                } else {
                    row[x * img.channels + c] = static_cast<png_byte>(q);
                }
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Raw double grid container (".phm"): magic PHMV, u32 h, u32 w, h*w f64 LE.
// Used where bit-exact phase maps matter more than viewability.
inline void save_phm(const std::string& path, const RGrid& g) {
    std::vector<uint8_t> buf;
    buf.reserve(12 + g.v.size() * 8);
    buf.insert(buf.end(), {'P', 'H', 'M', 'V'});
    put_u32(buf, static_cast<uint32_t>(g.h));
    put_u32(buf, static_cast<uint32_t>(g.w));
    for (double x : g.v) {
        uint64_t bits;
        std::memcpy(&bits, &x, 8);
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
    }
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path);
    if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size()) throw IoError("short write to " + path);
}

inline RGrid load_phm(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path);
    std::fseek(f.get(), 0, SEEK_END);
    long sz = std::ftell(f.get());
    std::fseek(f.get(), 0, SEEK_SET);
    if (sz < 12) throw IoError(path + ": not a phm file");
    std::vector<uint8_t> buf(static_cast<size_t>(sz));
    if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size()) throw IoError("short read from " + path);
    if (std::memcmp(buf.data(), "PHMV", 4) != 0) throw IoError(path + ": bad phm magic");
    ByteReader r(buf.data() + 4, buf.size() - 4);
    uint32_t h = r.u32(), w = r.u32();
    if (static_cast<uint64_t>(h) * w * 8 != buf.size() - 12) throw IoError(path + ": phm size mismatch");
    RGrid g(h, w);
    for (double& x : g.v) {
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(r.u8()) << (8 * i);
        std::memcpy(&x, &bits, 8);
    }
    return g;
}

}  // namespace holocodec

#endif
