"""Builds the compiled extension by delegating to cargo.

The extension crate lives in the sibling Rust workspace; this just runs
`cargo build --release -p vascage-py` and copies the resulting cdylib to
wherever setuptools expects the extension module. Install editable with
`pip install -e . --no-build-isolation`.
"""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

WORKSPACE = Path(__file__).resolve().parent.parent


class CargoExtension(Extension):
    def __init__(self, name: str, crate: str):
        super().__init__(name, sources=[])
        self.crate = crate


class CargoBuildExt(build_ext):
    def build_extension(self, ext: CargoExtension) -> None:
        subprocess.run(
            ["cargo", "build", "--release", "-p", ext.crate],
            cwd=WORKSPACE,
            check=True,
        )
        lib_name = ext.crate.replace("-", "_")
        suffix = ".dylib" if sys.platform == "darwin" else ".so"
        built = WORKSPACE / "target" / "release" / f"lib{lib_name}{suffix}"
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)


setup(
    ext_modules=[CargoExtension("vascage._native", crate="vascage-py")],
    cmdclass={"build_ext": CargoBuildExt},
)
