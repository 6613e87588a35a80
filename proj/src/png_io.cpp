#include "uwdiff/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "uwdiff/error.hpp"

namespace uwdiff {

namespace {

struct ReadCtx {
    const uint8_t* data;
    size_t size;
    size_t pos;
    char err[192];
};

void mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* ctx = static_cast<ReadCtx*>(png_get_io_ptr(png));
    if (ctx->pos + n > ctx->size) png_error(png, "unexpected end of data");
    std::memcpy(out, ctx->data + ctx->pos, n);
    ctx->pos += n;
}

void read_error(png_structp png, png_const_charp msg) {
    auto* ctx = static_cast<ReadCtx*>(png_get_error_ptr(png));
    if (ctx) std::snprintf(ctx->err, sizeof(ctx->err), "%s", msg);
    longjmp(png_jmpbuf(png), 1);
}

void silent_warning(png_structp, png_const_charp) {}

struct WriteCtx {
    std::vector<uint8_t>* out;
    char err[192];
};

void mem_write(png_structp png, png_bytep data, png_size_t n) {
    auto* ctx = static_cast<WriteCtx*>(png_get_io_ptr(png));
    ctx->out->insert(ctx->out->end(), data, data + n);
}

void mem_flush(png_structp) {}

void write_error(png_structp png, png_const_charp msg) {
    auto* ctx = static_cast<WriteCtx*>(png_get_error_ptr(png));
    if (ctx) std::snprintf(ctx->err, sizeof(ctx->err), "%s", msg);
    longjmp(png_jmpbuf(png), 1);
}

}  // namespace

Image decode_png(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw DecodeError("png decode error at byte 0: not a PNG signature");

    ReadCtx ctx{bytes.data(), bytes.size(), 0, {0}};
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, &read_error, &silent_warning);
    if (!png) throw DecodeError("png decode error: read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DecodeError("png decode error: info struct allocation failed");
    }

    std::vector<uint8_t> pixels;
    std::vector<png_bytep> rows;
    int width = 0, height = 0, channels = 0;

    if (setjmp(png_jmpbuf(png))) {
        const size_t pos = ctx.pos;
        const std::string msg = ctx.err[0] ? ctx.err : "decode failed";
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("png decode error at byte " + std::to_string(pos) + ": " + msg);
    }

    png_set_read_fn(png, &ctx, &mem_read);
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    channels = static_cast<int>(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("png decode error: unsupported channel count " +
                          std::to_string(channels));
    }

    const size_t stride = static_cast<size_t>(width) * channels;
    pixels.resize(stride * height);
    rows.resize(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<size_t>(y)] = pixels.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(height, width, channels);
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<float>(pixels[i]) / 255.0f;
    return img;
}

std::vector<uint8_t> encode_png(const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ShapeError("encode_png: channels must be 1 or 3");
    if (img.height <= 0 || img.width <= 0) throw ShapeError("encode_png: empty image");

    std::vector<uint8_t> out;
    WriteCtx ctx{&out, {0}};
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, &write_error, &silent_warning);
    if (!png) throw IoError("png encode error: write struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png encode error: info struct allocation failed");
    }

    const size_t stride = static_cast<size_t>(img.width) * img.channels;
    std::vector<uint8_t> pixels(stride * img.height);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));

    if (setjmp(png_jmpbuf(png))) {
        const std::string msg = ctx.err[0] ? ctx.err : "encode failed";
        png_destroy_write_struct(&png, &info);
        throw IoError("png encode error: " + msg);
    }

    png_set_write_fn(png, &ctx, &mem_write, &mem_flush);
    // Fixed settings keep the byte stream reproducible across runs.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

    for (size_t i = 0; i < img.data.size(); ++i) {
        const float v = img.data[i] * 255.0f;
        const long q = std::lroundf(v);
        pixels[i] = static_cast<uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
    }
    for (int y = 0; y < img.height; ++y) rows[static_cast<size_t>(y)] = pixels.data() + stride * y;

    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f),
                                std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

Image read_png(const std::string& path) { return decode_png(read_file(path)); }

void write_png(const std::string& path, const Image& img) {
    write_file(path, encode_png(img));
}

}  // namespace uwdiff
