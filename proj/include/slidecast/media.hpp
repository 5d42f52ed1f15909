#pragma once

// Slide images (PNG via libpng, binary PPM) and PCM WAV audio.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include <png.h>

#include "slidecast/errors.hpp"

namespace slidecast {

/// 8-bit RGB raster, rows top to bottom.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h, std::uint8_t r = 255, std::uint8_t g = 255, std::uint8_t b = 255)
        : width(w), height(h), rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {
        for (std::size_t i = 0; i < rgb.size(); i += 3) {
            rgb[i] = r;
            rgb[i + 1] = g;
            rgb[i + 2] = b;
        }
    }

    std::uint8_t* at(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }

    friend bool operator==(const Image&, const Image&) = default;
};

namespace detail {

struct PngReadState {
    std::string_view data;
    std::size_t pos = 0;
};

inline void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->pos + n > st->data.size()) png_error(png, "truncated PNG");
    std::memcpy(out, st->data.data() + st->pos, n);
    st->pos += n;
}

inline void png_write_cb(png_structp png, png_bytep in, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(in), n);
}

inline void png_flush_cb(png_structp) {}

inline void png_error_cb(png_structp png, png_const_charp msg) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

inline void png_warning_cb(png_structp, png_const_charp) {}

inline bool is_png(std::string_view bytes) {
    return bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0;
}

inline bool is_ppm(std::string_view bytes) { return bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6'; }

// Reads one PPM header integer, skipping whitespace and comments.
inline long ppm_int(std::string_view s, std::size_t& pos) {
    while (pos < s.size()) {
        if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    long v = 0;
    const std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) v = v * 10 + (s[pos++] - '0');
    if (pos == start || v > 100000) throw PreconditionError("malformed PPM header");
    return v;
}

inline Image decode_ppm(std::string_view s) {
    std::size_t pos = 2;
    const long w = ppm_int(s, pos);
    const long h = ppm_int(s, pos);
    const long maxval = ppm_int(s, pos);
    if (w <= 0 || h <= 0 || maxval != 255) throw PreconditionError("unsupported PPM image");
    ++pos;  // single whitespace before raster
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    if (s.size() < pos + need) throw PreconditionError("truncated PPM image");
    Image img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.rgb.assign(reinterpret_cast<const std::uint8_t*>(s.data() + pos),
                   reinterpret_cast<const std::uint8_t*>(s.data() + pos + need));
    return img;
}

inline Image decode_png(std::string_view bytes) {
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_cb, png_warning_cb);
    if (!png) throw Error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    Image img;
    std::vector<png_bytep> rows;
    PngReadState state{bytes, 0};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw PreconditionError("cannot decode PNG: " + err);
    }
    png_set_read_fn(png, &state, png_read_cb);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.rgb.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3);
    rows.resize(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = img.at(0, y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace detail

/// Decodes PNG or binary PPM. Throws PreconditionError for anything else.
inline Image decode_image(std::string_view bytes) {
    if (detail::is_png(bytes)) return detail::decode_png(bytes);
    if (detail::is_ppm(bytes)) return detail::decode_ppm(bytes);
    throw PreconditionError("image is neither PNG nor PPM");
}

inline std::string encode_png(const Image& img) {
    std::string out;
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_cb, detail::png_warning_cb);
    if (!png) throw Error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("cannot encode PNG: " + err);
    }
    png_set_write_fn(png, &out, detail::png_write_cb, detail::png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(img.at(0, y));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
    return out;
}

// ---- WAV -----------------------------------------------------------------

inline constexpr int kWavSampleRate = 16000;

/// 16-bit mono PCM silence of the given duration.
inline std::string make_silent_wav(std::int64_t duration_ms, int sample_rate = kWavSampleRate) {
    const auto samples = static_cast<std::uint32_t>(duration_ms * sample_rate / 1000);
    const std::uint32_t data_bytes = samples * 2;
    std::string out;
    auto u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    auto u16 = [&](std::uint16_t v) {
        out.push_back(static_cast<char>(v & 0xff));
        out.push_back(static_cast<char>(v >> 8));
    };
    out += "RIFF";
    u32(36 + data_bytes);
    out += "WAVEfmt ";
    u32(16);
    u16(1);  // PCM
    u16(1);  // mono
    u32(static_cast<std::uint32_t>(sample_rate));
    u32(static_cast<std::uint32_t>(sample_rate * 2));
    u16(2);
    u16(16);
    out += "data";
    u32(data_bytes);
    out.append(data_bytes, '\0');
    return out;
}

/// Duration of a PCM WAV file in milliseconds (floor).
inline std::int64_t wav_duration_ms(std::string_view wav) {
    auto u32 = [&](std::size_t at) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(wav[at + static_cast<std::size_t>(i)]);
        return v;
    };
    if (wav.size() < 12 || wav.substr(0, 4) != "RIFF" || wav.substr(8, 4) != "WAVE") throw PreconditionError("not a WAV file");
    std::size_t pos = 12;
    std::uint32_t byte_rate = 0;
    while (pos + 8 <= wav.size()) {
        const auto id = wav.substr(pos, 4);
        const std::uint32_t size = u32(pos + 4);
        if (id == "fmt " && pos + 16 <= wav.size()) byte_rate = u32(pos + 8 + 8);
        if (id == "data") {
            if (byte_rate == 0) throw PreconditionError("WAV data chunk before fmt chunk");
            return static_cast<std::int64_t>(size) * 1000 / byte_rate;
        }
        pos += 8 + size + (size & 1);
    }
    throw PreconditionError("WAV file has no data chunk");
}

}  // namespace slidecast
