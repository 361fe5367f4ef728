#pragma once

// AndroidManifest.xml parsing: binary AXML chunk walk extracting
// <uses-permission android:name=...> values. Plain-text XML is accepted
// too as a fixture convenience.

#include <cstdint>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "tempo/errors.hpp"

namespace tempo {

namespace axmldetail {

inline uint16_t rd16(const std::string& b, size_t off) {
  if (off + 2 > b.size()) throw BadAxml("truncated chunk");
  return uint16_t(uint8_t(b[off])) | uint16_t(uint8_t(b[off + 1])) << 8;
}
inline uint32_t rd32(const std::string& b, size_t off) {
  if (off + 4 > b.size()) throw BadAxml("truncated chunk");
  return uint32_t(uint8_t(b[off])) | uint32_t(uint8_t(b[off + 1])) << 8 |
         uint32_t(uint8_t(b[off + 2])) << 16 |
         uint32_t(uint8_t(b[off + 3])) << 24;
}

struct StringPool {
  std::vector<std::string> strings;
  std::string at(uint32_t idx) const {
    if (idx >= strings.size()) throw BadAxml("string index out of range");
    return strings[idx];
  }
};

inline StringPool parse_string_pool(const std::string& b, size_t off) {
  StringPool pool;
  uint32_t string_count = rd32(b, off + 8);
  uint32_t flags = rd32(b, off + 16);
  uint32_t strings_start = rd32(b, off + 20);
  bool utf8 = flags & 0x100;
  uint16_t header_size = rd16(b, off + 2);
  for (uint32_t i = 0; i < string_count; ++i) {
    uint32_t str_off = rd32(b, off + header_size + size_t(i) * 4);
    size_t p = off + strings_start + str_off;
    std::string s;
    if (utf8) {
      // two length prefixes (utf16 units, then byte count), 1-2 bytes each
      auto read_len = [&](size_t* q) -> uint32_t {
        uint32_t len = uint8_t(b.at(*q));
        (*q)++;
        if (len & 0x80) {
          len = ((len & 0x7f) << 8) | uint8_t(b.at(*q));
          (*q)++;
        }
        return len;
      };
      read_len(&p);
      uint32_t byte_len = read_len(&p);
      s = b.substr(p, byte_len);
    } else {
      uint32_t len = rd16(b, p);
      p += 2;
      if (len & 0x8000) {
        len = ((len & 0x7fff) << 16) | rd16(b, p);
        p += 2;
      }
      s.reserve(len);
      for (uint32_t j = 0; j < len; ++j) {
        uint16_t cu = rd16(b, p + size_t(j) * 2);
        // manifest identifiers are ASCII; replace anything else
        s.push_back(cu < 0x80 ? char(cu) : '?');
      }
    }
    pool.strings.push_back(std::move(s));
  }
  return pool;
}

}  // namespace axmldetail

inline bool looks_like_axml(const std::string& payload) {
  return payload.size() >= 8 && axmldetail::rd32(payload, 0) == 0x00080003;
}

inline std::set<std::string> parse_manifest_permissions(
    const std::string& payload) {
  using namespace axmldetail;
  std::set<std::string> perms;

  if (!looks_like_axml(payload)) {
    // plain-text fixture path
    size_t i = 0;
    while (i < payload.size() && (unsigned char)payload[i] <= ' ') ++i;
    if (i < payload.size() && payload[i] == '<') {
      static const std::regex re(
          "<uses-permission[^>]*android:name\\s*=\\s*\"([^\"]*)\"");
      auto begin = std::sregex_iterator(payload.begin(), payload.end(), re);
      for (auto it = begin; it != std::sregex_iterator(); ++it)
        perms.insert((*it)[1].str());
      return perms;
    }
    throw BadAxml("manifest is neither binary AXML nor XML text");
  }

  uint32_t file_size = rd32(payload, 4);
  if (file_size > payload.size()) throw BadAxml("declared size exceeds payload");

  StringPool pool;
  bool have_pool = false;
  size_t off = 8;
  while (off + 8 <= file_size) {
    uint16_t type = rd16(payload, off);
    uint32_t chunk_size = rd32(payload, off + 4);
    if (chunk_size < 8 || off + chunk_size > file_size)
      throw BadAxml("bad chunk size at offset " + std::to_string(off));
    if (type == 0x0001) {  // string pool
      pool = parse_string_pool(payload, off);
      have_pool = true;
    } else if (type == 0x0102) {  // start element
      if (!have_pool) throw BadAxml("element before string pool");
      uint32_t name_idx = rd32(payload, off + 20);
      if (pool.at(name_idx) == "uses-permission") {
        uint16_t attr_start = rd16(payload, off + 24);
        uint16_t attr_count = rd16(payload, off + 28);
        size_t attrs = off + 16 + attr_start;
        for (uint16_t a = 0; a < attr_count; ++a) {
          size_t ap = attrs + size_t(a) * 20;
          uint32_t attr_name = rd32(payload, ap + 4);
          if (pool.at(attr_name) != "name") continue;
          uint32_t raw = rd32(payload, ap + 8);
          uint8_t data_type = uint8_t(payload.at(ap + 15));
          uint32_t data = rd32(payload, ap + 16);
          if (raw != 0xFFFFFFFFu)
            perms.insert(pool.at(raw));
          else if (data_type == 0x03)  // TYPE_STRING
            perms.insert(pool.at(data));
        }
      }
    }
    off += chunk_size;
  }
  return perms;
}

}  // namespace tempo
