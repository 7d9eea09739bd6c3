#!/usr/bin/env python3
"""Writes the DEX fixtures and their expected decodings.

Run from this directory: `python3 gen_dex.py`. Outputs are checked in;
rerunning must reproduce them byte for byte.
"""

import hashlib
import json
import struct
import zlib
from pathlib import Path

NO_INDEX = 0xFFFFFFFF
ACC_PUBLIC = 0x1
ACC_STATIC = 0x8
ACC_CONSTRUCTOR = 0x10000

# map_list item types
TYPE_HEADER = 0x0000
TYPE_STRING_ID = 0x0001
TYPE_TYPE_ID = 0x0002
TYPE_PROTO_ID = 0x0003
TYPE_METHOD_ID = 0x0005
TYPE_CLASS_DEF = 0x0006
TYPE_CALL_SITE_ID = 0x0007
TYPE_METHOD_HANDLE = 0x0008
TYPE_MAP_LIST = 0x1000
TYPE_TYPE_LIST = 0x1001
TYPE_CLASS_DATA = 0x2000
TYPE_CODE = 0x2001
TYPE_STRING_DATA = 0x2002
TYPE_ENCODED_ARRAY = 0x2005

VALUE_METHOD_TYPE = 0x15
VALUE_METHOD_HANDLE = 0x16
VALUE_STRING = 0x17

HANDLE_STATIC_GET = 0x01
HANDLE_INVOKE_STATIC = 0x04
HANDLE_INVOKE_INSTANCE = 0x05


def uleb(n):
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def mutf8(s):
    out = bytearray()
    for ch in s:
        c = ord(ch)
        if c == 0:
            out += b"\xc0\x80"
        elif c < 0x80:
            out.append(c)
        elif c < 0x800:
            out += bytes([0xC0 | c >> 6, 0x80 | c & 0x3F])
        elif c < 0x10000:
            out += bytes([0xE0 | c >> 12, 0x80 | (c >> 6) & 0x3F, 0x80 | c & 0x3F])
        else:
            c -= 0x10000
            for u in (0xD800 | c >> 10, 0xDC00 | c & 0x3FF):
                out += bytes([0xE0 | u >> 12, 0x80 | (u >> 6) & 0x3F, 0x80 | u & 0x3F])
    return bytes(out)


def utf16_len(s):
    return sum(2 if ord(c) > 0xFFFF else 1 for c in s)


def desc(name):
    prims = {"void": "V", "boolean": "Z", "int": "I", "long": "J"}
    if name in prims:
        return prims[name]
    return "L" + name.replace(".", "/") + ";"


def shorty_char(d):
    return "L" if d[0] in "L[" else d


class M:
    """A method reference: owner class, name, parameter types, return type."""

    def __init__(self, owner, name, params=(), ret="void"):
        self.owner = owner
        self.name = name
        self.params = tuple(params)
        self.ret = ret

    def key(self):
        return (self.owner, self.name, self.params, self.ret)


class Method:
    def __init__(self, ref, code=None, direct=False, static=False):
        self.ref = ref
        self.code = code  # list of instructions, None for abstract
        self.direct = direct
        self.static = static


class Dex:
    def __init__(self, version="035"):
        self.version = version
        self.classes = []  # (name, superclass, [Method])
        self.call_sites = []  # (handle_kind, M) ; handle target for invoke-custom

    def add_class(self, name, methods, superclass="java.lang.Object"):
        self.classes.append((name, superclass, methods))

    def add_call_site(self, handle_kind, target):
        self.call_sites.append((handle_kind, target))
        return len(self.call_sites) - 1

    # ---- collection -------------------------------------------------
    def _refs(self):
        refs = {}
        for name, sup, methods in self.classes:
            for m in methods:
                refs[m.ref.key()] = m.ref
                for ins in m.code or []:
                    if ins[0] in ("invoke", "poly"):
                        refs[ins[2].key()] = ins[2]
        for _, target in self.call_sites:
            if isinstance(target, M):
                refs[target.key()] = target
        return list(refs.values())

    def build(self):
        refs = self._refs()
        strings = set()
        types = set()
        protos = set()
        for name, sup, _ in self.classes:
            types.add(desc(name))
            types.add(desc(sup))
        for r in refs:
            types.add(desc(r.owner))
            strings.add(r.name)
            ps = tuple(desc(p) for p in r.params)
            rt = desc(r.ret)
            types.update(ps)
            types.add(rt)
            protos.add((rt, ps))
        for kind, target in self.call_sites:
            if not isinstance(target, M):
                types.add(desc(target[0]))
                types.add(desc(target[2]))
                strings.add(target[1])
        strings.add("bootstrap")
        strings.update(types)
        shorties = {p: "".join(shorty_char(x) for x in (p[0],) + p[1]) for p in protos}
        strings.update(shorties.values())
        poly_proto = ("Ljava/lang/Object;", ("Ljava/lang/Object;",))
        protos.add(poly_proto)
        types.update(["Ljava/lang/Object;"])
        strings.update(["Ljava/lang/Object;"])
        shorties[poly_proto] = "LL"
        strings.add("LL")

        string_list = sorted(strings, key=lambda s: [ord(c) for c in s])
        sidx = {s: i for i, s in enumerate(string_list)}
        type_list = sorted(types, key=lambda t: sidx[t])
        tidx = {t: i for i, t in enumerate(type_list)}
        proto_list = sorted(protos, key=lambda p: (tidx[p[0]], [tidx[x] for x in p[1]]))
        pidx = {p: i for i, p in enumerate(proto_list)}

        def proto_of(r):
            return (desc(r.ret), tuple(desc(p) for p in r.params))

        method_list = sorted(refs, key=lambda r: (tidx[desc(r.owner)], sidx[r.name], pidx[proto_of(r)]))
        midx = {r.key(): i for i, r in enumerate(method_list)}

        # fields have their own table; the fixtures reference one static field
        field_refs = sorted(
            {t for k, t in self.call_sites if not isinstance(t, M)},
            key=lambda f: (tidx[desc(f[0])], sidx[f[1]]),
        )
        fidx = {f: i for i, f in enumerate(field_refs)}

        # ---- sizes of the id section ----
        off = 0x70
        string_ids_off = off
        off += 4 * len(string_list)
        type_ids_off = off
        off += 4 * len(type_list)
        proto_ids_off = off
        off += 12 * len(proto_list)
        field_ids_off = off if field_refs else 0
        off += 8 * len(field_refs)
        method_ids_off = off
        off += 8 * len(method_list)
        class_defs_off = off
        off += 32 * len(self.classes)
        call_site_ids_off = off
        off += 4 * len(self.call_sites)
        method_handles_off = off
        off += 8 * len(self.call_sites)
        data_off = off

        data = bytearray()

        def here():
            return data_off + len(data)

        def align(n):
            while here() % n:
                data.append(0)

        # type lists
        type_list_offs = {}
        for p in proto_list:
            if p[1] and p[1] not in type_list_offs:
                align(4)
                type_list_offs[p[1]] = here()
                data.extend(struct.pack("<I", len(p[1])))
                for t in p[1]:
                    data.extend(struct.pack("<H", tidx[t]))
        type_lists_start = min(type_list_offs.values()) if type_list_offs else 0

        # code items
        align(4)
        code_start = here()
        code_offs = {}
        n_code = 0
        for name, sup, methods in self.classes:
            for m in methods:
                if m.code is None:
                    continue
                align(4)
                code_offs[(name, m.ref.key())] = here()
                units = self._assemble(m.code, midx, pidx, poly_proto, proto_of)
                ins = len(m.ref.params) + (0 if m.static else 1)
                data.extend(struct.pack("<HHHHII", max(ins, 4), ins, 5, 0, 0, len(units)))
                for u in units:
                    data.extend(struct.pack("<H", u))
                n_code += 1

        # encoded arrays for call sites
        encoded_offs = []
        encoded_start = here()
        for i, _ in enumerate(self.call_sites):
            encoded_offs.append(here())
            data.extend(uleb(3))
            data.extend(bytes([(1 << 5) | VALUE_METHOD_HANDLE]) + struct.pack("<H", i))
            data.extend(bytes([(3 << 5) | VALUE_STRING]) + struct.pack("<I", sidx["bootstrap"]))
            data.extend(bytes([(1 << 5) | VALUE_METHOD_TYPE]) + struct.pack("<H", pidx[poly_proto]))

        # class data
        class_data_start = here()
        class_data_offs = []
        for name, sup, methods in self.classes:
            class_data_offs.append(here())
            direct = sorted([m for m in methods if m.direct], key=lambda m: midx[m.ref.key()])
            virtual = sorted([m for m in methods if not m.direct], key=lambda m: midx[m.ref.key()])
            data.extend(uleb(0) + uleb(0) + uleb(len(direct)) + uleb(len(virtual)))
            for group in (direct, virtual):
                prev = 0
                for m in group:
                    i = midx[m.ref.key()]
                    flags = ACC_PUBLIC | (ACC_STATIC if m.static else 0)
                    if m.ref.name == "<init>":
                        flags |= ACC_CONSTRUCTOR
                    data.extend(uleb(i - prev) + uleb(flags) + uleb(code_offs.get((name, m.ref.key()), 0)))
                    prev = i

        # string data
        string_data_start = here()
        string_offs = []
        for s in string_list:
            string_offs.append(here())
            data.extend(uleb(utf16_len(s)) + mutf8(s) + b"\0")

        align(4)
        map_off = here()
        items = [
            (TYPE_HEADER, 1, 0),
            (TYPE_STRING_ID, len(string_list), string_ids_off),
            (TYPE_TYPE_ID, len(type_list), type_ids_off),
            (TYPE_PROTO_ID, len(proto_list), proto_ids_off),
        ]
        if field_refs:
            items.append((0x0004, len(field_refs), field_ids_off))
        items += [
            (TYPE_METHOD_ID, len(method_list), method_ids_off),
            (TYPE_CLASS_DEF, len(self.classes), class_defs_off),
        ]
        if self.call_sites:
            items += [
                (TYPE_CALL_SITE_ID, len(self.call_sites), call_site_ids_off),
                (TYPE_METHOD_HANDLE, len(self.call_sites), method_handles_off),
            ]
        if type_list_offs:
            items.append((TYPE_TYPE_LIST, len(type_list_offs), type_lists_start))
        items.append((TYPE_CODE, n_code, code_start))
        if self.call_sites:
            items.append((TYPE_ENCODED_ARRAY, len(self.call_sites), encoded_start))
        items += [
            (TYPE_CLASS_DATA, len(self.classes), class_data_start),
            (TYPE_STRING_DATA, len(string_list), string_data_start),
            (TYPE_MAP_LIST, 1, map_off),
        ]
        items.sort(key=lambda it: it[2])
        data.extend(struct.pack("<I", len(items)))
        for kind, count, o in items:
            data.extend(struct.pack("<HHII", kind, 0, count, o))

        ids = bytearray()
        for o in string_offs:
            ids += struct.pack("<I", o)
        for t in type_list:
            ids += struct.pack("<I", sidx[t])
        for p in proto_list:
            ids += struct.pack("<III", sidx[shorties[p]], tidx[p[0]], type_list_offs.get(p[1], 0))
        for f in field_refs:
            ids += struct.pack("<HHI", tidx[desc(f[0])], tidx[desc(f[2])], sidx[f[1]])
        for r in method_list:
            ids += struct.pack("<HHI", tidx[desc(r.owner)], pidx[proto_of(r)], sidx[r.name])
        for (name, sup, _), cd in zip(self.classes, class_data_offs):
            ids += struct.pack("<IIIIIIII", tidx[desc(name)], ACC_PUBLIC, tidx[desc(sup)], 0, NO_INDEX, 0, cd, 0)
        for o in encoded_offs:
            ids += struct.pack("<I", o)
        for kind, target in self.call_sites:
            target_idx = midx[target.key()] if isinstance(target, M) else fidx[target]
            ids += struct.pack("<HHHH", kind, 0, target_idx, 0)
        assert 0x70 + len(ids) == data_off

        file_size = data_off + len(data)
        header = bytearray(b"dex\n" + self.version.encode() + b"\0")
        header += b"\0" * 4 + b"\0" * 20  # checksum, signature
        header += struct.pack("<III", file_size, 0x70, 0x12345678)
        header += struct.pack("<III", 0, 0, map_off)
        header += struct.pack("<II", len(string_list), string_ids_off)
        header += struct.pack("<II", len(type_list), type_ids_off)
        header += struct.pack("<II", len(proto_list), proto_ids_off)
        header += struct.pack("<II", len(field_refs), field_ids_off)
        header += struct.pack("<II", len(method_list), method_ids_off)
        header += struct.pack("<II", len(self.classes), class_defs_off)
        header += struct.pack("<II", len(data), data_off)
        assert len(header) == 0x70
        out = bytearray(header + ids + data)
        out[12:32] = hashlib.sha1(out[32:]).digest()
        out[8:12] = struct.pack("<I", zlib.adler32(bytes(out[12:])))
        return bytes(out)

    def _assemble(self, code, midx, pidx, poly_proto, proto_of):
        units = []
        payloads = []
        for ins in code:
            kind = ins[0]
            if kind == "invoke":
                op, ref = ins[1], ins[2]
                i = midx[ref.key()]
                if op >= 0x74:  # range form
                    units += [op | (1 << 8), i, 0]
                else:
                    units += [op | (1 << 12), i, 0]
            elif kind == "poly":
                units += [ins[1] | (2 << 12), midx[ins[2].key()], 0x10, pidx[poly_proto]]
            elif kind == "custom":
                op, site = ins[1], ins[2]
                units += [op | (1 << 8) if op == 0xFD else op, site, 0]
            elif kind == "const4":
                units += [0x12]
            elif kind == "const_wide":
                units += [0x18, 1, 2, 3, 4]
            elif kind == "packed_switch":
                payloads.append(("packed", len(units), ins[1]))
                units += [0x2B, 0, 0]
            elif kind == "sparse_switch":
                payloads.append(("sparse", len(units), ins[1]))
                units += [0x2C, 0, 0]
            elif kind == "fill_array":
                payloads.append(("array", len(units), ins[1]))
                units += [0x26, 0, 0]
            elif kind == "return":
                units += [0x0E]
            else:
                raise ValueError(kind)
        for pkind, at, n in payloads:
            if len(units) % 2:
                units.append(0x0000)  # nop keeps the payload 4-byte aligned
            rel = len(units) - at
            units[at + 1] = rel & 0xFFFF
            units[at + 2] = rel >> 16
            if pkind == "packed":
                units += [0x0100, n, 0, 0] + [7, 0] * n
            elif pkind == "sparse":
                units += [0x0200, n] + [1, 0] * n + [7, 0] * n
            else:
                width = 2
                units += [0x0300, width, n & 0xFFFF, n >> 16]
                units += [0xBEEF] * ((width * n + 1) // 2)
        return units


def expected(dex):
    """What a decoder must return: classes in definition order, methods in
    encoded order (direct then virtual, each by method index), call sites in
    instruction order with per-caller ordinals."""

    # method_ids order: owner descriptor, name, then proto (return type,
    # then parameter types), all compared by code point
    def midx_key(r):
        return (desc(r.owner), r.name, desc(r.ret), tuple(desc(p) for p in r.params))

    out = []
    for name, sup, methods in dex.classes:
        direct = sorted([m for m in methods if m.direct], key=lambda m: midx_key(m.ref))
        virtual = sorted([m for m in methods if not m.direct], key=lambda m: midx_key(m.ref))
        declared = []
        sites = []
        ordinals = {}
        for m in direct + virtual:
            declared.append([m.ref.name, len(m.ref.params)])
            k = (m.ref.name, len(m.ref.params))
            for ins in m.code or []:
                target = None
                if ins[0] in ("invoke", "poly"):
                    target = ins[2]
                elif ins[0] == "custom":
                    kind, t = dex.call_sites[ins[2]]
                    if isinstance(t, M) and 0x04 <= kind <= 0x08:
                        target = t
                if target is None:
                    continue
                o = ordinals.get(k, 0)
                ordinals[k] = o + 1
                sites.append([m.ref.name, len(m.ref.params), target.owner, target.name, len(target.params), o])
        out.append({"fqn": name, "declared_methods": declared, "call_sites": sites})
    return out


def write(path, dex):
    data = dex.build()
    Path(path).write_bytes(data)
    Path(str(path) + ".expected.json").write_text(json.dumps(expected(dex), indent=1) + "\n")


def init(owner):
    return M(owner, "<init>")


OBJ = "java.lang.Object"
ADMOB_SHOW = M("com.google.android.gms.ads.InterstitialAd", "show")
BUNDLE = "android.os.Bundle"


def one_class():
    d = Dex("035")
    act = "com.example.single.MainActivity"
    d.add_class(
        act,
        [
            Method(init(act), [("invoke", 0x70, init("android.app.Activity")), ("return",)], direct=True),
            Method(
                M(act, "onCreate", [BUNDLE]),
                [
                    ("invoke", 0x6F, M("android.app.Activity", "onCreate", [BUNDLE])),
                    ("const4",),
                    ("invoke", 0x6E, ADMOB_SHOW),
                    ("return",),
                ],
            ),
        ],
        superclass="android.app.Activity",
    )
    return d


def multi_class():
    d = Dex("039")
    pkg = "com.example.multi"
    act = f"{pkg}.MainActivity"
    helper = f"{pkg}.util.ImageLoader"
    iface = f"{pkg}.Callback"
    lam = f"{pkg}.MainActivity$1"
    static_site = d.add_call_site(HANDLE_INVOKE_STATIC, M(helper, "bootstrap", ["int"], "void"))
    field_site = d.add_call_site(HANDLE_STATIC_GET, (helper, "CACHE", OBJ))
    inst_site = d.add_call_site(HANDLE_INVOKE_INSTANCE, M(act, "onAd", [], "void"))
    d.add_class(iface, [Method(M(iface, "done", ["int"]), None)])
    d.add_class(
        helper,
        [
            Method(init(helper), [("invoke", 0x70, init(OBJ)), ("return",)], direct=True),
            Method(M(helper, "bootstrap", ["int"]), [("return",)], direct=True, static=True),
            Method(
                M(helper, "load", ["java.lang.String", "int"]),
                [
                    ("const_wide",),
                    ("packed_switch", 3),
                    ("invoke", 0x71, M("com.squareup.okhttp.OkHttpClient", "newCall", ["java.lang.String"])),
                    ("sparse_switch", 2),
                    ("fill_array", 5),
                    ("invoke", 0x72, M(iface, "done", ["int"])),
                    ("return",),
                ],
            ),
        ],
    )
    d.add_class(
        act,
        [
            Method(init(act), [("invoke", 0x76, init("android.app.Activity")), ("return",)], direct=True),
            Method(
                M(act, "onCreate", [BUNDLE]),
                [
                    ("invoke", 0x75, M("android.app.Activity", "onCreate", [BUNDLE])),
                    ("invoke", 0x74, M(helper, "load", ["java.lang.String", "int"])),
                    ("invoke", 0x77, M("com.inmobi.InMobiSdk", "init", ["android.content.Context"])),
                    ("invoke", 0x78, M(iface, "done", ["int"])),
                    ("poly", 0xFA, M("java.lang.invoke.MethodHandle", "invoke", ["java.lang.Object[]"], OBJ)),
                    ("poly", 0xFB, M("java.lang.invoke.MethodHandle", "invokeExact", ["java.lang.Object[]"], OBJ)),
                    ("custom", 0xFC, static_site),
                    ("custom", 0xFC, field_site),
                    ("custom", 0xFD, inst_site),
                    ("return",),
                ],
            ),
            Method(M(act, "onAd"), [("invoke", 0x6E, ADMOB_SHOW), ("invoke", 0x6E, ADMOB_SHOW), ("return",)]),
        ],
        superclass="android.app.Activity",
    )
    d.add_class(
        lam,
        [
            Method(init(lam), [("invoke", 0x70, init(OBJ)), ("return",)], direct=True),
            Method(M(lam, "done", ["int"]), [("invoke", 0x6E, ADMOB_SHOW), ("return",)]),
        ],
    )
    d.add_class(
        "com.google.android.gms.ads.InterstitialAd",
        [Method(ADMOB_SHOW, [("return",)])],
    )
    return d


def multidex():
    pkg = "com.example.multidex"
    act = f"{pkg}.MainActivity"
    settings = f"{pkg}.SettingsActivity"
    helper = f"{pkg}.advertising.AdHelper"
    primary = Dex("035")
    primary.add_class(
        act,
        [Method(M(act, "onCreate", [BUNDLE]), [("invoke", 0x6E, M(helper, "showBanner")), ("return",)])],
        superclass="android.app.Activity",
    )
    primary.add_class(
        helper,
        [
            Method(
                M(helper, "showBanner"),
                [
                    ("invoke", 0x6E, M("com.mopub.mobileads.MoPubView", "loadAd")),
                    ("invoke", 0x6E, ADMOB_SHOW),
                    ("return",),
                ],
            )
        ],
    )
    secondary = Dex("037")
    secondary.add_class(
        settings,
        [Method(M(settings, "onResume"), [("return",)])],
        superclass="android.app.Activity",
    )
    # duplicate definition: the primary file's copy must win
    secondary.add_class(helper, [Method(M(helper, "unused"), [("return",)])])
    secondary.add_class("com.google.android.gms.ads.InterstitialAd", [Method(ADMOB_SHOW, [("return",)])])
    third = Dex("038")
    third.add_class("com.mopub.mobileads.MoPubView", [Method(M("com.mopub.mobileads.MoPubView", "loadAd"), [("return",)])])
    return primary, secondary, third


def main():
    here = Path(__file__).resolve().parent
    out = here / "dex"
    out.mkdir(exist_ok=True)
    write(out / "one_class.dex", one_class())
    write(out / "multi_class.dex", multi_class())
    upd = here / "update_multidex"
    upd.mkdir(exist_ok=True)
    for name, dex in zip(["classes.dex", "classes2.dex", "classes3.dex"], multidex()):
        write(upd / name, dex)
    lib = upd / "lib" / "armeabi-v7a"
    lib.mkdir(parents=True, exist_ok=True)
    (lib / "libnative.so").write_bytes(b"\x7fELF\x01\x01\x01\0")


if __name__ == "__main__":
    main()
