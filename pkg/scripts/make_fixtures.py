"""Regenerate the APK fixtures under tests/fixtures/.

    python3 scripts/make_fixtures.py [outdir]
"""

import json
import sys
from pathlib import Path

from permdroid.apk_extract.builder import build_apk, build_manifest

P = "android.permission."

FIXTURES = {
    "utf16_basic": dict(
        package="com.example.flashlight",
        permissions=[P + "INTERNET", P + "SEND_SMS", P + "RECEIVE_BOOT_COMPLETED", P + "READ_PHONE_STATE"],
        sdk23=[P + "CAMERA"],
        defined=["com.example.flashlight.permission.C2D_MESSAGE"],
    ),
    "utf8_pool": dict(
        package="org.exämple.wallpaper",
        permissions=[P + "ACCESS_NETWORK_STATE", P + "INTERNET", P + "WAKE_LOCK",
                     "com.google.android.c2dm.permission.RECEIVE"],
        utf8=True,
    ),
    "duplicates": dict(
        package="com.example.dupes",
        permissions=[P + "INTERNET", P + "SEND_SMS", P + "INTERNET", P + "READ_SMS", P + "SEND_SMS"],
    ),
    "obfuscated": dict(
        package="a.b.c",
        permissions=[P + "READ_CONTACTS", P + "SEND_SMS", P + "RECEIVE_SMS"],
        strip_attr_names=True,
    ),
    "no_permissions": dict(package="com.example.calculator", permissions=[]),
    "stored": dict(
        package="com.example.stored",
        permissions=[P + "VIBRATE", P + "INTERNET"],
        compress=False,
    ),
}


def main(outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    expected = {}
    for name, spec in FIXTURES.items():
        spec = dict(spec)
        compress = spec.pop("compress", True)
        manifest = build_manifest(spec.pop("package"), spec["permissions"], **{
            k: v for k, v in spec.items() if k != "permissions"})
        (outdir / f"{name}.apk").write_bytes(build_apk(manifest, compress=compress))
        declared = spec["permissions"] + spec.get("sdk23", [])
        expected[name] = list(dict.fromkeys(declared))
    (outdir / "expected.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent.parent / "tests" / "fixtures")
