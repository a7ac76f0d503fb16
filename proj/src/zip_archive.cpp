#include "amdprep/zip_archive.hpp"

#include <zlib.h>

#include <algorithm>
#include <set>

#include "amdprep/error.hpp"

namespace amdprep {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01
constexpr std::uint64_t kMaxUncompressed = 512ull << 20;

const char* const kInvalid = "bundle must be a valid zip archive";

[[noreturn]] void fail(const std::string& why) {
  throw Error(Errc::ValidationFailed, std::string(kInvalid) + ": " + why, kInvalid);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v));
  put16(out, static_cast<std::uint16_t>(v >> 16));
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return static_cast<std::uint16_t>(bytes_[at] | (bytes_[at + 1] << 8));
  }
  std::uint32_t u32(std::size_t at) const {
    return static_cast<std::uint32_t>(u16(at)) | (static_cast<std::uint32_t>(u16(at + 2)) << 16);
  }
  std::span<const std::uint8_t> slice(std::size_t at, std::size_t n) const {
    need(at, n);
    return bytes_.subspan(at, n);
  }
  std::size_t size() const { return bytes_.size(); }

private:
  void need(std::size_t at, std::size_t n) const {
    if (at > bytes_.size() || n > bytes_.size() - at) fail("truncated archive");
  }
  std::span<const std::uint8_t> bytes_;
};

std::uint32_t crc_of(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - done, 1u << 30));
    crc = crc32(crc, data.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::size_t expected) {
  std::vector<std::uint8_t> out(std::max<std::size_t>(expected, 1));
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) fail("inflate init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) fail("corrupt deflate stream");
  out.resize(expected);
  return out;
}

}  // namespace

std::vector<std::uint8_t> write_zip(std::span<const ZipEntry> entries) {
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> central;
  for (const auto& e : entries) {
    if (e.data.size() > 0xffffffffu || e.name.size() > 0xffff) {
      throw Error(Errc::InvalidArgument, "zip entry too large: " + e.name);
    }
    const auto offset = static_cast<std::uint32_t>(out.size());
    const std::uint32_t crc = crc_of(e.data);
    const auto size = static_cast<std::uint32_t>(e.data.size());
    const auto name_len = static_cast<std::uint16_t>(e.name.size());

    put32(out, kLocalSig);
    put16(out, 20);
    put16(out, 0);
    put16(out, 0);  // stored
    put16(out, 0);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, name_len);
    put16(out, 0);
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.insert(out.end(), e.data.begin(), e.data.end());

    put32(central, kCentralSig);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, name_len);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    central.insert(central.end(), e.name.begin(), e.name.end());
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

std::vector<ZipEntry> read_zip(std::span<const std::uint8_t> archive) {
  Reader r(archive);
  if (r.size() < 22) fail("too short");

  std::size_t eocd = std::string::npos;
  const std::size_t lowest = r.size() >= 22 + 0xffff ? r.size() - 22 - 0xffff : 0;
  for (std::size_t at = r.size() - 22 + 1; at-- > lowest;) {
    if (r.u32(at) == kEndSig) {
      eocd = at;
      break;
    }
  }
  if (eocd == std::string::npos) fail("no end-of-central-directory record");

  const std::uint16_t count = r.u16(eocd + 10);
  std::size_t at = r.u32(eocd + 16);
  std::vector<ZipEntry> entries;
  std::set<std::string> seen;
  std::uint64_t total = 0;
  for (std::uint16_t i = 0; i < count; ++i) {
    if (r.u32(at) != kCentralSig) fail("bad central directory entry");
    const std::uint16_t flags = r.u16(at + 8);
    const std::uint16_t method = r.u16(at + 10);
    const std::uint32_t crc = r.u32(at + 16);
    const std::uint32_t csize = r.u32(at + 20);
    const std::uint32_t usize = r.u32(at + 24);
    const std::uint16_t name_len = r.u16(at + 28);
    const std::uint16_t extra_len = r.u16(at + 30);
    const std::uint16_t comment_len = r.u16(at + 32);
    const std::uint32_t local = r.u32(at + 42);
    const auto name_bytes = r.slice(at + 46, name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    at += 46u + name_len + extra_len + comment_len;

    if (flags & 0x1) fail("encrypted entries are not supported");
    if (!seen.insert(name).second) fail("duplicate entry " + name);
    total += usize;
    if (total > kMaxUncompressed) fail("uncompressed size exceeds limit");

    if (r.u32(local) != kLocalSig) fail("bad local header for " + name);
    const std::size_t data_at = local + 30u + r.u16(local + 26) + r.u16(local + 28);
    const auto payload = r.slice(data_at, csize);

    ZipEntry entry{std::move(name), {}};
    if (method == 0) {
      if (csize != usize) fail("stored entry size mismatch");
      entry.data.assign(payload.begin(), payload.end());
    } else if (method == 8) {
      entry.data = inflate_raw(payload, usize);
    } else {
      fail("unsupported compression method " + std::to_string(method));
    }
    if (crc_of(entry.data) != crc) fail("CRC mismatch for " + entry.name);
    entries.push_back(std::move(entry));
  }
  return entries;
}

}  // namespace amdprep
