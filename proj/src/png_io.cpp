#include "amdprep/png_io.hpp"

#include <png.h>

#include <atomic>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <string>

#include <unistd.h>

#include "amdprep/error.hpp"

namespace amdprep {

namespace {

constexpr int kZlibLevel = 6;

struct WriteSink {
  std::vector<std::uint8_t>* out;
};

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* sink = static_cast<WriteSink*>(png_get_io_ptr(png));
  sink->out->insert(sink->out->end(), data, data + length);
}

void flush_callback(png_structp) {}

}  // namespace

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;

  if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
    throw Error(Errc::InvalidImage, std::string("not a readable PNG: ") + image.message);
  }
  const auto format = image.format;
  if (format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&image);
    throw Error(Errc::InvalidImage, "PNG images with an alpha channel are not supported");
  }
  if (format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error(Errc::InvalidImage, "16-bit PNG images are not supported");
  }

  const int channels = (format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, data.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(Errc::InvalidImage, "PNG decode failed: " + msg);
  }
  return ImageBuffer(width, height, channels, std::move(data));
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  std::vector<std::uint8_t> out;
  WriteSink sink{&out};
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
  const std::size_t stride = static_cast<std::size_t>(img.width()) * static_cast<std::size_t>(img.channels());
  auto* base = const_cast<std::uint8_t*>(img.data().data());
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = base + y * stride;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error(Errc::IoError, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(Errc::IoError, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::IoError, "PNG encode failed");
  }

  png_set_write_fn(png, &sink, write_callback, flush_callback);
  png_set_compression_level(png, kZlibLevel);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_ALL_FILTERS);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_BASE, PNG_FILTER_TYPE_BASE);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::IoError, "read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(Errc::IoError, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::IoError, "cannot rename into " + path.string());
  }
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ImageBuffer read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what(), e.invariant());
  }
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  write_file_atomic(path, encode_png(img));
}

}  // namespace amdprep
