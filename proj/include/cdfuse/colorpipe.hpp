#pragma once

#include "cdfuse/tensor.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

namespace cdfuse {

struct ImageRGB {
    Tensor pixels; // 3×H×W in [0,1]

    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }
};

struct ImageYCbCr {
    Tensor y, cb, cr; // each 1×H×W in [0,1]
};

/// BT.601 full-range forward transform.
inline ImageYCbCr rgb_to_ycbcr(const ImageRGB& img) {
    const int H = img.height(), W = img.width();
    ImageYCbCr out{Tensor({1, H, W}), Tensor({1, H, W}), Tensor({1, H, W})};
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            const double r = img.pixels.at(0, i, j);
            const double g = img.pixels.at(1, i, j);
            const double b = img.pixels.at(2, i, j);
            const double y = 0.299 * r + 0.587 * g + 0.114 * b;
            out.y.at(0, i, j) = y;
            out.cb.at(0, i, j) = 0.5 + (b - y) * 0.564;
            out.cr.at(0, i, j) = 0.5 + (r - y) * 0.713;
        }
    return out;
}

inline ImageRGB ycbcr_to_rgb(const ImageYCbCr& img) {
    const int H = img.y.dim(1), W = img.y.dim(2);
    ImageRGB out{Tensor({3, H, W})};
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            const double y = img.y.at(0, i, j);
            const double cb = img.cb.at(0, i, j);
            const double cr = img.cr.at(0, i, j);
            const double r = y + (cr - 0.5) / 0.713;
            const double b = y + (cb - 0.5) / 0.564;
            const double g = (y - 0.299 * r - 0.114 * b) / 0.587;
            out.pixels.at(0, i, j) = std::clamp(r, 0.0, 1.0);
            out.pixels.at(1, i, j) = std::clamp(g, 0.0, 1.0);
            out.pixels.at(2, i, j) = std::clamp(b, 0.0, 1.0);
        }
    return out;
}

/// Saturation-weighted chroma blend; neutral (0.5) planes carry no weight.
inline Tensor fuse_chrominance(const Tensor& c1, const Tensor& c2) {
    detail::require_same_shape(c1, c2, "fuse_chrominance");
    Tensor out = c1;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double a = c1[i], b = c2[i];
        // canonical operand order keeps the blend bitwise symmetric under
        // argument swap even when the compiler contracts to FMA
        if (b < a) std::swap(a, b);
        const double wa = std::abs(a - 0.5);
        const double wb = std::abs(b - 0.5);
        const double den = wa + wb;
        out[i] = den < 1e-6 ? 0.5 : (a * wa + b * wb) / den;
    }
    return out;
}

namespace detail {

inline int pnm_token(std::istream& is) {
    // Skips whitespace and '#' comments, returns the next non-negative integer.
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = is.get();
    }
    if (c == EOF || !std::isdigit(c)) throw format_error("malformed PNM header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

inline ImageRGB decode_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char p, kind;
    is.get(p);
    is.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6' && kind != '2' && kind != '3'))
        throw format_error(path + ": unsupported PNM variant");
    const bool color = (kind == '6' || kind == '3');
    const bool binary = (kind == '5' || kind == '6');
    const int W = pnm_token(is);
    const int H = pnm_token(is);
    const int maxval = pnm_token(is);
    if (maxval <= 0 || maxval > 255) throw format_error(path + ": only 8-bit PNM supported");
    const int nch = color ? 3 : 1;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(W) * H * nch);
    if (binary) {
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
            throw format_error(path + ": truncated pixel data");
    } else {
        for (auto& b : raw) b = static_cast<std::uint8_t>(pnm_token(is));
    }
    ImageRGB img{Tensor({3, H, W})};
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < 3; ++c) {
                const std::uint8_t v = raw[(static_cast<std::size_t>(i) * W + j) * nch + (color ? c : 0)];
                img.pixels.at(c, i, j) = static_cast<double>(v) / maxval;
            }
    return img;
}

inline std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
}

inline void encode_ppm(const ImageRGB& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    for (int i = 0; i < img.height(); ++i)
        for (int j = 0; j < img.width(); ++j)
            for (int c = 0; c < 3; ++c)
                os.put(static_cast<char>(to_u8(img.pixels.at(c, i, j))));
    if (!os) throw io_error("write failed: " + path);
}

inline void encode_pgm(const Tensor& plane, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "P5\n" << plane.dim(2) << " " << plane.dim(1) << "\n255\n";
    for (int i = 0; i < plane.dim(1); ++i)
        for (int j = 0; j < plane.dim(2); ++j)
            os.put(static_cast<char>(to_u8(plane.at(0, i, j))));
    if (!os) throw io_error("write failed: " + path);
}

inline ImageRGB decode_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw io_error("cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw io_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw format_error(path + ": malformed PNG");
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int W = static_cast<int>(png_get_image_width(png, info));
    const int H = static_cast<int>(png_get_image_height(png, info));
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(W) * H * 3);
    std::vector<png_bytep> rows(static_cast<std::size_t>(H));
    for (int i = 0; i < H; ++i) rows[static_cast<std::size_t>(i)] = raw.data() + static_cast<std::size_t>(i) * W * 3;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    ImageRGB img{Tensor({3, H, W})};
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < 3; ++c)
                img.pixels.at(c, i, j) =
                    raw[(static_cast<std::size_t>(i) * W + j) * 3 + c] / 255.0;
    return img;
}

inline void encode_png(const ImageRGB& img, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw io_error("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw io_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw io_error(path + ": PNG write failed");
    }
    const int H = img.height(), W = img.width();
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(W) * 3);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(j) * 3 + c] = to_u8(img.pixels.at(c, i, j));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

} // namespace detail

/// Reads PPM/PGM (binary or ASCII) or PNG; grayscale is promoted to RGB.
inline ImageRGB decode_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    unsigned char sig[2] = {0, 0};
    is.read(reinterpret_cast<char*>(sig), 2);
    is.close();
    if (sig[0] == 'P' && sig[1] >= '2' && sig[1] <= '6') return detail::decode_pnm(path);
    if (sig[0] == 0x89 && sig[1] == 'P') return detail::decode_png(path);
    throw format_error(path + ": unrecognized image format (expected PNM or PNG)");
}

/// Writes by extension: .ppm, .pgm (luminance of the image), or .png.
inline void encode_image(const ImageRGB& img, const std::string& path) {
    if (detail::has_suffix(path, ".ppm")) {
        detail::encode_ppm(img, path);
    } else if (detail::has_suffix(path, ".pgm")) {
        detail::encode_pgm(rgb_to_ycbcr(img).y, path);
    } else if (detail::has_suffix(path, ".png")) {
        detail::encode_png(img, path);
    } else {
        throw format_error(path + ": unsupported output extension (use .ppm/.pgm/.png)");
    }
}

/// True when every pixel is gray (R==G==B), e.g. an infrared source.
inline bool is_grayscale(const ImageRGB& img) {
    for (int i = 0; i < img.height(); ++i)
        for (int j = 0; j < img.width(); ++j)
            if (img.pixels.at(0, i, j) != img.pixels.at(1, i, j) ||
                img.pixels.at(1, i, j) != img.pixels.at(2, i, j))
                return false;
    return true;
}

} // namespace cdfuse
