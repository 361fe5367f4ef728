#!/usr/bin/env python3
"""Builds the binary test fixtures: minimal DEX files, a binary AXML
manifest, and APK containers, plus golden listings derived from the
assembly specs below (not from any parser under test).

Run from anywhere; outputs land next to this script. Outputs are
committed so the C++ tests need no Python at build time.
"""

import io
import struct
import zipfile
from pathlib import Path

HERE = Path(__file__).resolve().parent


# ----------------------------------------------------------------------
# DEX builder
# ----------------------------------------------------------------------

class DexBuilder:
    def __init__(self):
        self.strings = []          # sorted later
        self.types = []            # descriptor strings
        self.protos = []           # (shorty, return_desc, [param_desc])
        self.methods = []          # (class_desc, proto_index, name)
        self.classes = []          # dicts

    def string(self, s):
        if s not in self.strings:
            self.strings.append(s)
        return s

    def type_(self, desc):
        self.string(desc)
        if desc not in self.types:
            self.types.append(desc)
        return desc

    def proto(self, shorty, ret, params):
        self.string(shorty)
        self.type_(ret)
        for p in params:
            self.type_(p)
        key = (shorty, ret, tuple(params))
        for i, (s, r, ps) in enumerate(self.protos):
            if (s, r, tuple(ps)) == key:
                return i
        self.protos.append((shorty, ret, list(params)))
        return len(self.protos) - 1

    def method(self, class_desc, proto_idx, name):
        self.type_(class_desc)
        self.string(name)
        key = (class_desc, proto_idx, name)
        if key not in self.methods:
            self.methods.append(key)
        return self.methods.index(key)

    def clazz(self, class_desc, super_desc, direct_methods):
        """direct_methods: list of (method_idx, code_units or None)."""
        self.type_(class_desc)
        self.type_(super_desc)
        self.classes.append({
            "desc": class_desc,
            "super": super_desc,
            "direct": direct_methods,
        })

    @staticmethod
    def uleb(v):
        out = b""
        while True:
            b7 = v & 0x7F
            v >>= 7
            if v:
                out += bytes([b7 | 0x80])
            else:
                out += bytes([b7])
                return out

    def build(self):
        self.strings.sort()
        sid = {s: i for i, s in enumerate(self.strings)}
        tid = {t: i for i, t in enumerate(self.types)}

        header_size = 0x70
        string_ids_off = header_size
        type_ids_off = string_ids_off + 4 * len(self.strings)
        proto_ids_off = type_ids_off + 4 * len(self.types)
        method_ids_off = proto_ids_off + 12 * len(self.protos)
        class_defs_off = method_ids_off + 8 * len(self.methods)
        data_off = class_defs_off + 32 * len(self.classes)

        data = io.BytesIO()

        def dpos():
            return data_off + data.tell()

        def align4():
            while dpos() % 4:
                data.write(b"\x00")

        # type lists for protos with params
        type_list_off = {}
        for i, (_, _, params) in enumerate(self.protos):
            if params:
                align4()
                type_list_off[i] = dpos()
                data.write(struct.pack("<I", len(params)))
                for p in params:
                    data.write(struct.pack("<H", tid[p]))

        # code items
        code_off = {}
        for c in self.classes:
            for mi, units in c["direct"]:
                if units is None:
                    continue
                align4()
                code_off[mi] = dpos()
                data.write(struct.pack("<HHHHII", 1, 1, 1, 0, 0, len(units)))
                for u in units:
                    data.write(struct.pack("<H", u))

        # class_data
        class_data_off = {}
        for ci, c in enumerate(self.classes):
            class_data_off[ci] = dpos()
            data.write(self.uleb(0) + self.uleb(0) +
                       self.uleb(len(c["direct"])) + self.uleb(0))
            prev = 0
            for mi, units in c["direct"]:
                data.write(self.uleb(mi - prev))
                prev = mi
                data.write(self.uleb(0x10008))  # public|static-ish flags
                data.write(self.uleb(code_off.get(mi, 0)))

        # string data
        string_data_off = {}
        for s in self.strings:
            string_data_off[s] = dpos()
            enc = s.encode("utf-8")
            data.write(self.uleb(len(s)) + enc + b"\x00")

        data_bytes = data.getvalue()
        total = data_off + len(data_bytes)

        out = io.BytesIO()
        out.write(b"dex\n035\x00")
        out.write(struct.pack("<I", 0))        # checksum (unchecked)
        out.write(b"\x00" * 20)                # signature (unchecked)
        out.write(struct.pack("<II", total, header_size))
        out.write(struct.pack("<I", 0x12345678))  # endian tag
        out.write(struct.pack("<II", 0, 0))    # link
        out.write(struct.pack("<I", 0))        # map_off (unused)
        out.write(struct.pack("<II", len(self.strings), string_ids_off))
        out.write(struct.pack("<II", len(self.types), type_ids_off))
        out.write(struct.pack("<II", len(self.protos), proto_ids_off))
        out.write(struct.pack("<II", 0, 0))    # field_ids
        out.write(struct.pack("<II", len(self.methods), method_ids_off))
        out.write(struct.pack("<II", len(self.classes), class_defs_off))
        out.write(struct.pack("<II", len(data_bytes), data_off))
        assert out.tell() == header_size

        for s in self.strings:
            out.write(struct.pack("<I", string_data_off[s]))
        for t in self.types:
            out.write(struct.pack("<I", sid[t]))
        for i, (shorty, ret, params) in enumerate(self.protos):
            out.write(struct.pack("<III", sid[shorty], tid[ret],
                                  type_list_off.get(i, 0)))
        for (cls, proto_idx, name) in self.methods:
            out.write(struct.pack("<HHI", tid[cls], proto_idx, sid[name]))
        for ci, c in enumerate(self.classes):
            out.write(struct.pack("<8I", tid[c["desc"]], 0x1, tid[c["super"]],
                                  0, 0xFFFFFFFF, 0, class_data_off[ci], 0))
        out.write(data_bytes)
        return out.getvalue()


MNEMONIC = {
    0x00: "nop", 0x0e: "return-void", 0x12: "const/4", 0x13: "const/16",
    0x18: "const-wide", 0x21: "array-length", 0x2b: "packed-switch",
    0x26: "fill-array-data", 0x2c: "sparse-switch", 0x44: "aget",
    0x6e: "invoke-virtual", 0x81: "int-to-long", 0xb0: "add-int/2addr",
    0xfa: "invoke-polymorphic", 0xfe: "const-method-handle",
}


def build_tiny_dex():
    b = DexBuilder()
    p_void = b.proto("V", "V", [])
    p_int = b.proto("I", "I", [])
    m_length = b.method("Ljava/lang/String;", p_int, "length")
    m_run = b.method("Lcom/example/Main;", p_void, "run")
    # const/4 v0,#0 ; invoke-virtual {v0}, String.length ; return-void
    units = [0x0012, 0x106E, m_length, 0x0000, 0x000E]
    opcodes = [0x12, 0x6E, 0x0E]
    b.clazz("Lcom/example/Main;", "Ljava/lang/Object;", [(m_run, units)])
    return b.build(), opcodes


def build_rich_dex():
    """Wider opcode coverage: multi-unit formats and all three payload
    pseudo-instruction kinds."""
    b = DexBuilder()
    p_void = b.proto("V", "V", [])
    m_run = b.method("Lcom/example/Rich;", p_void, "go")

    insns = []      # (primary_opcode or None, [units])
    insns.append((0x00, [0x0000]))                       # nop
    insns.append((0x13, [0x0013, 0x002A]))               # const/16 v0,#42
    insns.append((0x18, [0x0018, 1, 2, 3, 4]))           # const-wide v0
    insns.append((0x21, [0x0121]))                       # array-length
    insns.append((0x44, [0x0044, 0x0100]))               # aget
    insns.append((0xB0, [0x10B0]))                       # add-int/2addr
    insns.append((0x81, [0x0081]))                       # int-to-long
    insns.append((0xFE, [0x00FE, 0x0000]))               # const-method-handle
    insns.append((0xFA, [0x10FA, 0x0000, 0x0000, 0x0000]))  # invoke-polymorphic
    # switches and array data reference payloads below; offsets unchecked
    insns.append((0x2B, [0x002B, 0x0000, 0x0000]))       # packed-switch
    insns.append((0x2C, [0x002C, 0x0000, 0x0000]))       # sparse-switch
    insns.append((0x26, [0x0026, 0x0000, 0x0000]))       # fill-array-data
    insns.append((0x0E, [0x000E]))                       # return-void
    # payloads (data, not behavior; must be skipped by the decoder)
    insns.append((None, [0x0100, 0x0002, 0, 0, 0, 0, 0, 0]))       # packed, size 2
    insns.append((None, [0x0200, 0x0001, 0, 0, 0, 0]))             # sparse, size 1
    insns.append((None, [0x0300, 0x0002, 0x0003, 0x0000, 0, 0, 0]))  # fill, 3 u16

    units, opcodes = [], []
    for op, us in insns:
        units.extend(us)
        if op is not None:
            opcodes.append(op)
    b.clazz("Lcom/example/Rich;", "Ljava/lang/Object;", [(m_run, units)])
    return b.build(), opcodes


# ----------------------------------------------------------------------
# Binary AXML builder
# ----------------------------------------------------------------------

def build_axml(permissions):
    android_ns = "http://schemas.android.com/apk/res/android"
    strings = [android_ns, "name", "manifest", "uses-permission"] + permissions
    sid = {s: i for i, s in enumerate(strings)}

    pool_data = io.BytesIO()
    offsets = []
    for s in strings:
        offsets.append(pool_data.tell())
        enc = s.encode("utf-16-le")
        pool_data.write(struct.pack("<H", len(s)) + enc + b"\x00\x00")
    while pool_data.tell() % 4:
        pool_data.write(b"\x00")
    pd = pool_data.getvalue()
    pool_size = 28 + 4 * len(strings) + len(pd)
    pool = struct.pack("<HHIIIIII", 0x0001, 28, pool_size, len(strings), 0, 0,
                       28 + 4 * len(strings), 0)
    pool += b"".join(struct.pack("<I", o) for o in offsets) + pd

    body = io.BytesIO()

    def start_elem(name, attrs):
        # attrs: list of (ns_idx, name_idx, raw_idx, data_type, data)
        size = 16 + 20 + 20 * len(attrs)
        body.write(struct.pack("<HHIII", 0x0102, 16, size, 0, 0xFFFFFFFF))
        body.write(struct.pack("<IIHHHHHH", 0xFFFFFFFF, sid[name], 20, 20,
                               len(attrs), 0, 0, 0))
        for (ns, nm, raw, dt, dat) in attrs:
            body.write(struct.pack("<IIIHBBI", ns, nm, raw, 8, 0, dt, dat))

    def end_elem(name):
        body.write(struct.pack("<HHIII", 0x0103, 16, 24, 0, 0xFFFFFFFF))
        body.write(struct.pack("<II", 0xFFFFFFFF, sid[name]))

    start_elem("manifest", [])
    for p in permissions:
        start_elem("uses-permission",
                   [(sid[android_ns], sid["name"], sid[p], 0x03, sid[p])])
        end_elem("uses-permission")
    end_elem("manifest")
    bb = body.getvalue()

    total = 8 + len(pool) + len(bb)
    return struct.pack("<HHI", 0x0003, 8, total) + pool + bb


# ----------------------------------------------------------------------

def main():
    tiny_dex, tiny_ops = build_tiny_dex()
    rich_dex, rich_ops = build_rich_dex()
    axml = build_axml(["android.permission.INTERNET",
                       "android.permission.READ_SMS"])

    (HERE / "tiny.dex").write_bytes(tiny_dex)
    (HERE / "rich.dex").write_bytes(rich_dex)
    (HERE / "manifest.axml").write_bytes(axml)
    (HERE / "manifest_plain.xml").write_text(
        '<?xml version="1.0"?>\n<manifest>\n'
        '  <uses-permission android:name="android.permission.INTERNET"/>\n'
        '  <uses-permission android:name="android.permission.INTERNET"/>\n'
        '  <uses-permission android:name="android.permission.READ_SMS"/>\n'
        '</manifest>\n')

    (HERE / "tiny_opcodes.golden").write_text(
        "".join(MNEMONIC[o] + "\n" for o in tiny_ops))
    (HERE / "rich_opcodes.golden").write_text(
        "".join(MNEMONIC[o] + "\n" for o in rich_ops))
    (HERE / "tiny_apis.golden").write_text("java.lang.String#length#()I\n")
    (HERE / "tiny_perms.golden").write_text(
        "android.permission.INTERNET\nandroid.permission.READ_SMS\n")

    with zipfile.ZipFile(HERE / "tiny.apk", "w", zipfile.ZIP_DEFLATED) as z:
        z.writestr("classes.dex", tiny_dex)
        z.writestr("AndroidManifest.xml", axml)

    with zipfile.ZipFile(HERE / "multidex.apk", "w", zipfile.ZIP_DEFLATED) as z:
        z.writestr("classes.dex", tiny_dex)
        z.writestr("classes2.dex", rich_dex)
        z.writestr("AndroidManifest.xml", axml)

    # broken secondary dex: skipped with a warning; primary still parses
    with zipfile.ZipFile(HERE / "broken2.apk", "w", zipfile.ZIP_DEFLATED) as z:
        z.writestr("classes.dex", tiny_dex)
        z.writestr("classes2.dex", b"dex\n035\x00" + b"\x01" * 20)
        z.writestr("AndroidManifest.xml", axml)

    with zipfile.ZipFile(HERE / "nodex.zip", "w") as z:
        z.writestr("readme.txt", b"no dex here")

    print("fixtures written to", HERE)


if __name__ == "__main__":
    main()
