#pragma once

// Minimal read-only ZIP support: central-directory walk plus stored and
// deflate entries. APKs are plain ZIP containers; zip64 and encryption
// are out of scope.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "tempo/errors.hpp"

namespace tempo {

namespace zipdetail {

inline uint16_t rd16(const std::string& b, size_t off) {
  return uint16_t(uint8_t(b[off])) | uint16_t(uint8_t(b[off + 1])) << 8;
}
inline uint32_t rd32(const std::string& b, size_t off) {
  return uint32_t(uint8_t(b[off])) | uint32_t(uint8_t(b[off + 1])) << 8 |
         uint32_t(uint8_t(b[off + 2])) << 16 | uint32_t(uint8_t(b[off + 3])) << 24;
}

inline std::string inflate_raw(const std::string& comp, size_t expected) {
  std::string out(expected, '\0');
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (inflateInit2(&zs, -15) != Z_OK) throw Error("zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(comp.data()));
  zs.avail_in = uInt(comp.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = uInt(out.size());
  int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != expected)
    throw Error("zip entry: deflate stream corrupt");
  return out;
}

}  // namespace zipdetail

// Extracts all entries of a ZIP archive held in memory.
// Throws NotAZip when the end-of-central-directory record is absent.
inline std::map<std::string, std::string> unzip_all(const std::string& bytes,
                                                    const std::string& origin) {
  using namespace zipdetail;
  constexpr uint32_t kEocd = 0x06054b50, kCen = 0x02014b50, kLoc = 0x04034b50;
  if (bytes.size() < 22) throw NotAZip(origin + ": too small for a ZIP archive");
  // EOCD is at the end, possibly preceded by a comment (max 64k).
  size_t eocd = std::string::npos;
  size_t scan_start = bytes.size() >= 22 + 65535 ? bytes.size() - 22 - 65535 : 0;
  for (size_t i = bytes.size() - 22 + 1; i-- > scan_start;) {
    if (rd32(bytes, i) == kEocd) { eocd = i; break; }
  }
  if (eocd == std::string::npos)
    throw NotAZip(origin + ": no end-of-central-directory record");
  uint16_t n_entries = rd16(bytes, eocd + 10);
  uint32_t cen_off = rd32(bytes, eocd + 16);

  std::map<std::string, std::string> entries;
  size_t p = cen_off;
  for (uint16_t i = 0; i < n_entries; ++i) {
    if (p + 46 > bytes.size() || rd32(bytes, p) != kCen)
      throw NotAZip(origin + ": corrupt central directory");
    uint16_t method = rd16(bytes, p + 10);
    uint32_t comp_size = rd32(bytes, p + 20);
    uint32_t uncomp_size = rd32(bytes, p + 24);
    uint16_t name_len = rd16(bytes, p + 28);
    uint16_t extra_len = rd16(bytes, p + 30);
    uint16_t comment_len = rd16(bytes, p + 32);
    uint32_t loc_off = rd32(bytes, p + 42);
    std::string name = bytes.substr(p + 46, name_len);
    p += 46 + name_len + extra_len + comment_len;

    if (!name.empty() && name.back() == '/') continue;  // directory entry
    if (loc_off + 30 > bytes.size() || rd32(bytes, loc_off) != kLoc)
      throw NotAZip(origin + ": bad local header for " + name);
    uint16_t l_name = rd16(bytes, loc_off + 26);
    uint16_t l_extra = rd16(bytes, loc_off + 28);
    size_t data_off = loc_off + 30 + l_name + l_extra;
    if (data_off + comp_size > bytes.size())
      throw NotAZip(origin + ": truncated entry " + name);
    std::string raw = bytes.substr(data_off, comp_size);
    if (method == 0) {
      entries[name] = std::move(raw);
    } else if (method == 8) {
      entries[name] = inflate_raw(raw, uncomp_size);
    } else {
      throw NotAZip(origin + ": unsupported compression method " +
                    std::to_string(method) + " for " + name);
    }
  }
  return entries;
}

}  // namespace tempo
