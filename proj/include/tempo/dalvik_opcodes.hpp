#pragma once

// Dalvik instruction table: mnemonic, width in 16-bit code units, and the
// symbol category used by the featurizer. Covers the full 0x00-0xff space
// of current dex bytecode; gaps are reserved/unused opcodes.

#include <array>
#include <cstdint>
#include <string>

namespace tempo {

// 17 named categories plus a reserved bucket for undefined opcode bytes.
enum class Sym : uint8_t {
  NOP, MOVE, RETURN, CONST, MONITOR, CHECK, NEW, ARRAY, THROW, JUMP,
  COMPARE, FIELD, INVOKE, ARITH, CONVERT, INVOKE_POLY_CUSTOM, CONST_METHOD,
  UNKNOWN,
};

constexpr int kSymbolCount = 18;  // 17 categories + UNKNOWN

inline const char* sym_name(Sym s) {
  static const char* names[] = {
      "NOP", "MOVE", "RETURN", "CONST", "MONITOR", "CHECK", "NEW", "ARRAY",
      "THROW", "JUMP", "COMPARE", "FIELD", "INVOKE", "ARITH", "CONVERT",
      "INVOKE_POLY_CUSTOM", "CONST_METHOD", "UNKNOWN"};
  return names[int(s)];
}

inline bool sym_from_name(const std::string& name, Sym* out) {
  for (int i = 0; i < kSymbolCount; ++i) {
    if (name == sym_name(Sym(i))) { *out = Sym(i); return true; }
  }
  return false;
}

struct OpcodeInfo {
  const char* mnemonic;  // nullptr for undefined bytes
  uint8_t units;         // instruction width in 16-bit code units
  Sym sym;
};

inline const std::array<OpcodeInfo, 256>& dalvik_opcode_table() {
  static const std::array<OpcodeInfo, 256> table = [] {
    std::array<OpcodeInfo, 256> t{};
    for (auto& e : t) e = {nullptr, 1, Sym::UNKNOWN};
    auto set = [&](int op, const char* m, int units, Sym s) {
      t[size_t(op)] = {m, uint8_t(units), s};
    };
    auto range = [&](int lo, int hi, std::initializer_list<const char*> ms,
                     int units, Sym s) {
      int op = lo;
      for (const char* m : ms) set(op++, m, units, s);
      (void)hi;
    };

    set(0x00, "nop", 1, Sym::NOP);
    range(0x01, 0x09,
          {"move", "move/from16", "move/16", "move-wide", "move-wide/from16",
           "move-wide/16", "move-object", "move-object/from16",
           "move-object/16"},
          0, Sym::MOVE);
    // widths for the move family differ per encoding
    t[0x01].units = 1; t[0x02].units = 2; t[0x03].units = 3;
    t[0x04].units = 1; t[0x05].units = 2; t[0x06].units = 3;
    t[0x07].units = 1; t[0x08].units = 2; t[0x09].units = 3;
    range(0x0a, 0x0d,
          {"move-result", "move-result-wide", "move-result-object",
           "move-exception"},
          1, Sym::MOVE);
    range(0x0e, 0x11, {"return-void", "return", "return-wide", "return-object"},
          1, Sym::RETURN);
    set(0x12, "const/4", 1, Sym::CONST);
    set(0x13, "const/16", 2, Sym::CONST);
    set(0x14, "const", 3, Sym::CONST);
    set(0x15, "const/high16", 2, Sym::CONST);
    set(0x16, "const-wide/16", 2, Sym::CONST);
    set(0x17, "const-wide/32", 3, Sym::CONST);
    set(0x18, "const-wide", 5, Sym::CONST);
    set(0x19, "const-wide/high16", 2, Sym::CONST);
    set(0x1a, "const-string", 2, Sym::CONST);
    set(0x1b, "const-string/jumbo", 3, Sym::CONST);
    set(0x1c, "const-class", 2, Sym::CONST);
    set(0x1d, "monitor-enter", 1, Sym::MONITOR);
    set(0x1e, "monitor-exit", 1, Sym::MONITOR);
    set(0x1f, "check-cast", 2, Sym::CHECK);
    set(0x20, "instance-of", 2, Sym::CHECK);
    set(0x21, "array-length", 1, Sym::ARRAY);
    set(0x22, "new-instance", 2, Sym::NEW);
    set(0x23, "new-array", 2, Sym::NEW);
    set(0x24, "filled-new-array", 3, Sym::NEW);
    set(0x25, "filled-new-array/range", 3, Sym::NEW);
    set(0x26, "fill-array-data", 3, Sym::ARRAY);
    set(0x27, "throw", 1, Sym::THROW);
    set(0x28, "goto", 1, Sym::JUMP);
    set(0x29, "goto/16", 2, Sym::JUMP);
    set(0x2a, "goto/32", 3, Sym::JUMP);
    set(0x2b, "packed-switch", 3, Sym::JUMP);
    set(0x2c, "sparse-switch", 3, Sym::JUMP);
    range(0x2d, 0x31,
          {"cmpl-float", "cmpg-float", "cmpl-double", "cmpg-double",
           "cmp-long"},
          2, Sym::COMPARE);
    range(0x32, 0x37,
          {"if-eq", "if-ne", "if-lt", "if-ge", "if-gt", "if-le"}, 2, Sym::JUMP);
    range(0x38, 0x3d,
          {"if-eqz", "if-nez", "if-ltz", "if-gez", "if-gtz", "if-lez"}, 2,
          Sym::JUMP);
    // 0x3e-0x43 unused
    range(0x44, 0x51,
          {"aget", "aget-wide", "aget-object", "aget-boolean", "aget-byte",
           "aget-char", "aget-short", "aput", "aput-wide", "aput-object",
           "aput-boolean", "aput-byte", "aput-char", "aput-short"},
          2, Sym::ARRAY);
    range(0x52, 0x5f,
          {"iget", "iget-wide", "iget-object", "iget-boolean", "iget-byte",
           "iget-char", "iget-short", "iput", "iput-wide", "iput-object",
           "iput-boolean", "iput-byte", "iput-char", "iput-short"},
          2, Sym::FIELD);
    range(0x60, 0x6d,
          {"sget", "sget-wide", "sget-object", "sget-boolean", "sget-byte",
           "sget-char", "sget-short", "sput", "sput-wide", "sput-object",
           "sput-boolean", "sput-byte", "sput-char", "sput-short"},
          2, Sym::FIELD);
    range(0x6e, 0x72,
          {"invoke-virtual", "invoke-super", "invoke-direct", "invoke-static",
           "invoke-interface"},
          3, Sym::INVOKE);
    // 0x73 unused
    range(0x74, 0x78,
          {"invoke-virtual/range", "invoke-super/range", "invoke-direct/range",
           "invoke-static/range", "invoke-interface/range"},
          3, Sym::INVOKE);
    // 0x79-0x7a unused
    range(0x7b, 0x80,
          {"neg-int", "not-int", "neg-long", "not-long", "neg-float",
           "neg-double"},
          1, Sym::ARITH);
    range(0x81, 0x8f,
          {"int-to-long", "int-to-float", "int-to-double", "long-to-int",
           "long-to-float", "long-to-double", "float-to-int", "float-to-long",
           "float-to-double", "double-to-int", "double-to-long",
           "double-to-float", "int-to-byte", "int-to-char", "int-to-short"},
          1, Sym::CONVERT);
    range(0x90, 0xaf,
          {"add-int", "sub-int", "mul-int", "div-int", "rem-int", "and-int",
           "or-int", "xor-int", "shl-int", "shr-int", "ushr-int", "add-long",
           "sub-long", "mul-long", "div-long", "rem-long", "and-long",
           "or-long", "xor-long", "shl-long", "shr-long", "ushr-long",
           "add-float", "sub-float", "mul-float", "div-float", "rem-float",
           "add-double", "sub-double", "mul-double", "div-double",
           "rem-double"},
          2, Sym::ARITH);
    range(0xb0, 0xcf,
          {"add-int/2addr", "sub-int/2addr", "mul-int/2addr", "div-int/2addr",
           "rem-int/2addr", "and-int/2addr", "or-int/2addr", "xor-int/2addr",
           "shl-int/2addr", "shr-int/2addr", "ushr-int/2addr",
           "add-long/2addr", "sub-long/2addr", "mul-long/2addr",
           "div-long/2addr", "rem-long/2addr", "and-long/2addr",
           "or-long/2addr", "xor-long/2addr", "shl-long/2addr",
           "shr-long/2addr", "ushr-long/2addr", "add-float/2addr",
           "sub-float/2addr", "mul-float/2addr", "div-float/2addr",
           "rem-float/2addr", "add-double/2addr", "sub-double/2addr",
           "mul-double/2addr", "div-double/2addr", "rem-double/2addr"},
          1, Sym::ARITH);
    range(0xd0, 0xd7,
          {"add-int/lit16", "rsub-int", "mul-int/lit16", "div-int/lit16",
           "rem-int/lit16", "and-int/lit16", "or-int/lit16", "xor-int/lit16"},
          2, Sym::ARITH);
    range(0xd8, 0xe2,
          {"add-int/lit8", "rsub-int/lit8", "mul-int/lit8", "div-int/lit8",
           "rem-int/lit8", "and-int/lit8", "or-int/lit8", "xor-int/lit8",
           "shl-int/lit8", "shr-int/lit8", "ushr-int/lit8"},
          2, Sym::ARITH);
    // 0xe3-0xf9 unused
    set(0xfa, "invoke-polymorphic", 4, Sym::INVOKE_POLY_CUSTOM);
    set(0xfb, "invoke-polymorphic/range", 4, Sym::INVOKE_POLY_CUSTOM);
    set(0xfc, "invoke-custom", 3, Sym::INVOKE_POLY_CUSTOM);
    set(0xfd, "invoke-custom/range", 3, Sym::INVOKE_POLY_CUSTOM);
    set(0xfe, "const-method-handle", 2, Sym::CONST_METHOD);
    set(0xff, "const-method-type", 2, Sym::CONST_METHOD);
    return t;
  }();
  return table;
}

inline bool opcode_defined(uint8_t op) {
  return dalvik_opcode_table()[op].mnemonic != nullptr;
}

inline std::string opcode_mnemonic(uint8_t op) {
  const auto& e = dalvik_opcode_table()[op];
  return e.mnemonic ? e.mnemonic : "unknown";
}

}  // namespace tempo
