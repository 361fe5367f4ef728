#pragma once

// Direct DEX parser: string/type/proto/method id tables, class_data,
// code items and the instruction stream. Extracts what the pipeline
// needs (opcode sequences and external framework method references)
// and nothing else.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tempo/dalvik_opcodes.hpp"
#include "tempo/errors.hpp"

namespace tempo {

struct DexMethodBody {
  std::string owner_class;  // dotted, e.g. com.example.Main
  std::string method_name;
  std::vector<uint8_t> opcodes;  // primary opcode byte per instruction
};

struct ApiRef {
  std::string class_name;  // dotted framework class
  std::string method_name;
  std::string descriptor;  // (params)return, dex type descriptors

  auto operator<=>(const ApiRef&) const = default;
};

struct DexParseResult {
  std::vector<DexMethodBody> methods;
  std::vector<ApiRef> api_refs;  // deduplicated, sorted
  std::vector<std::string> warnings;
};

inline const std::vector<std::string>& default_framework_prefixes() {
  static const std::vector<std::string> p = {"android.", "java.", "javax.",
                                             "androidx.", "kotlin."};
  return p;
}

namespace dexdetail {

class Reader {
 public:
  Reader(const std::string& b) : b_(b) {}
  uint8_t u8(size_t off) const {
    check(off, 1);
    return uint8_t(b_[off]);
  }
  uint16_t u16(size_t off) const {
    check(off, 2);
    return uint16_t(uint8_t(b_[off])) | uint16_t(uint8_t(b_[off + 1])) << 8;
  }
  uint32_t u32(size_t off) const {
    check(off, 4);
    return uint32_t(uint8_t(b_[off])) | uint32_t(uint8_t(b_[off + 1])) << 8 |
           uint32_t(uint8_t(b_[off + 2])) << 16 |
           uint32_t(uint8_t(b_[off + 3])) << 24;
  }
  uint32_t uleb128(size_t* off) const {
    uint32_t v = 0;
    int shift = 0;
    while (true) {
      uint8_t byte = u8((*off)++);
      v |= uint32_t(byte & 0x7f) << shift;
      if (!(byte & 0x80)) break;
      shift += 7;
      if (shift > 31) throw TruncatedDex("uleb128 overlong");
    }
    return v;
  }
  // MUTF-8 string data: uleb length prefix, then NUL-terminated bytes.
  std::string mutf8(size_t off) const {
    uleb128(&off);
    std::string s;
    while (true) {
      uint8_t c = u8(off++);
      if (c == 0) break;
      s.push_back(char(c));
    }
    return s;
  }
  size_t size() const { return b_.size(); }

 private:
  void check(size_t off, size_t n) const {
    if (off + n > b_.size())
      throw TruncatedDex("read past end at offset " + std::to_string(off));
  }
  const std::string& b_;
};

inline std::string dotted_class(const std::string& descriptor) {
  // Lfoo/bar/Baz; -> foo.bar.Baz. Non-reference descriptors pass through.
  if (descriptor.size() < 3 || descriptor.front() != 'L' ||
      descriptor.back() != ';')
    return descriptor;
  std::string s = descriptor.substr(1, descriptor.size() - 2);
  for (char& c : s)
    if (c == '/') c = '.';
  return s;
}

inline bool matches_prefix(const std::string& cls,
                           const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes)
    if (cls.rfind(p, 0) == 0) return true;
  return false;
}

}  // namespace dexdetail

// Decodes one instruction stream. Appends the primary opcode byte of each
// instruction (payload pseudo-instructions are skipped: they are data).
// Unknown opcode bytes are kept, advance one unit, and produce a warning.
inline void decode_insns(const dexdetail::Reader& r, size_t insns_off,
                         uint32_t insns_size_units,
                         std::vector<uint8_t>* opcodes,
                         std::vector<std::string>* warnings) {
  const auto& table = dalvik_opcode_table();
  uint32_t pos = 0;
  while (pos < insns_size_units) {
    uint16_t unit = r.u16(insns_off + size_t(pos) * 2);
    uint8_t op = uint8_t(unit & 0xff);
    uint32_t width;
    if (op == 0x00 && (unit >> 8) != 0) {
      // payload pseudo-instruction
      uint16_t ident = unit >> 8;
      if (ident == 0x01) {  // packed-switch-payload
        uint16_t size = r.u16(insns_off + size_t(pos + 1) * 2);
        width = uint32_t(size) * 2 + 4;
      } else if (ident == 0x02) {  // sparse-switch-payload
        uint16_t size = r.u16(insns_off + size_t(pos + 1) * 2);
        width = uint32_t(size) * 4 + 2;
      } else if (ident == 0x03) {  // fill-array-data-payload
        uint16_t elem_width = r.u16(insns_off + size_t(pos + 1) * 2);
        uint32_t size = r.u32(insns_off + size_t(pos + 2) * 2);
        width = (size * elem_width + 1) / 2 + 4;
      } else {
        if (warnings)
          warnings->push_back("unknown payload ident " + std::to_string(ident) +
                              " at unit " + std::to_string(pos));
        width = 1;
      }
      pos += width;
      continue;
    }
    const OpcodeInfo& info = table[op];
    if (!info.mnemonic) {
      if (warnings)
        warnings->push_back("unknown opcode 0x" + std::to_string(op) +
                            " at unit " + std::to_string(pos));
      width = 1;
    } else {
      width = info.units;
    }
    opcodes->push_back(op);
    pos += width;
  }
  if (pos != insns_size_units)
    throw TruncatedDex("instruction stream overruns declared size (" +
                       std::to_string(pos) + " vs " +
                       std::to_string(insns_size_units) + " units)");
}

inline DexParseResult parse_dex(
    const std::string& payload,
    const std::vector<std::string>& framework_prefixes =
        default_framework_prefixes()) {
  using namespace dexdetail;
  if (payload.size() < 8 || payload.compare(0, 4, "dex\n") != 0 ||
      payload[7] != '\0')
    throw BadMagic("payload does not start with DEX magic");
  Reader r(payload);
  if (payload.size() < 0x70) throw TruncatedDex("header shorter than 0x70");

  uint32_t string_ids_off = r.u32(0x3c);
  uint32_t type_ids_size = r.u32(0x40), type_ids_off = r.u32(0x44);
  uint32_t proto_ids_size = r.u32(0x48), proto_ids_off = r.u32(0x4c);
  uint32_t method_ids_size = r.u32(0x58), method_ids_off = r.u32(0x5c);
  uint32_t class_defs_size = r.u32(0x60), class_defs_off = r.u32(0x64);

  auto string_at = [&](uint32_t idx) {
    return r.mutf8(r.u32(string_ids_off + size_t(idx) * 4));
  };
  auto type_descriptor = [&](uint32_t idx) {
    if (idx >= type_ids_size) throw TruncatedDex("type index out of range");
    return string_at(r.u32(type_ids_off + size_t(idx) * 4));
  };
  auto proto_descriptor = [&](uint32_t idx) {
    if (idx >= proto_ids_size) throw TruncatedDex("proto index out of range");
    size_t p = proto_ids_off + size_t(idx) * 12;
    uint32_t return_idx = r.u32(p + 4);
    uint32_t params_off = r.u32(p + 8);
    std::string d = "(";
    if (params_off != 0) {
      uint32_t n = r.u32(params_off);
      for (uint32_t i = 0; i < n; ++i)
        d += type_descriptor(r.u16(params_off + 4 + size_t(i) * 2));
    }
    d += ")";
    d += type_descriptor(return_idx);
    return d;
  };

  DexParseResult out;

  // Classes defined in this dex; method_ids on other classes are external.
  std::set<uint32_t> local_class_idx;
  for (uint32_t i = 0; i < class_defs_size; ++i)
    local_class_idx.insert(r.u32(class_defs_off + size_t(i) * 32));

  std::set<ApiRef> refs;
  for (uint32_t i = 0; i < method_ids_size; ++i) {
    size_t p = method_ids_off + size_t(i) * 8;
    uint16_t class_idx = r.u16(p);
    if (local_class_idx.count(class_idx)) continue;
    std::string cls = dotted_class(type_descriptor(class_idx));
    if (!matches_prefix(cls, framework_prefixes)) continue;
    uint16_t proto_idx = r.u16(p + 2);
    uint32_t name_idx = r.u32(p + 4);
    refs.insert(ApiRef{cls, string_at(name_idx), proto_descriptor(proto_idx)});
  }
  out.api_refs.assign(refs.begin(), refs.end());

  // Method bodies, in class_def order then class_data order.
  for (uint32_t ci = 0; ci < class_defs_size; ++ci) {
    size_t cd = class_defs_off + size_t(ci) * 32;
    uint32_t class_idx = r.u32(cd);
    uint32_t class_data_off = r.u32(cd + 24);
    if (class_data_off == 0) continue;
    std::string owner = dotted_class(type_descriptor(class_idx));

    size_t p = class_data_off;
    uint32_t n_static = r.uleb128(&p);
    uint32_t n_instance = r.uleb128(&p);
    uint32_t n_direct = r.uleb128(&p);
    uint32_t n_virtual = r.uleb128(&p);
    for (uint32_t i = 0; i < n_static + n_instance; ++i) {
      r.uleb128(&p);  // field_idx_diff
      r.uleb128(&p);  // access_flags
    }
    auto read_methods = [&](uint32_t count) {
      uint32_t method_idx = 0;
      for (uint32_t i = 0; i < count; ++i) {
        method_idx += r.uleb128(&p);
        r.uleb128(&p);  // access_flags
        uint32_t code_off = r.uleb128(&p);
        if (code_off == 0) continue;  // abstract/native
        if (method_idx >= method_ids_size)
          throw TruncatedDex("method index out of range in class_data");
        uint32_t name_idx = r.u32(method_ids_off + size_t(method_idx) * 8 + 4);
        DexMethodBody body;
        body.owner_class = owner;
        body.method_name = string_at(name_idx);
        uint32_t insns_size = r.u32(code_off + 12);
        decode_insns(r, code_off + 16, insns_size, &body.opcodes,
                     &out.warnings);
        out.methods.push_back(std::move(body));
      }
    };
    read_methods(n_direct);
    read_methods(n_virtual);
  }
  return out;
}

}  // namespace tempo
