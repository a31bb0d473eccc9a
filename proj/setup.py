"""Builds the pybind11 extension through the project's CMake tree."""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        configure = [
            "cmake",
            "-S", str(source_dir),
            "-B", str(build_dir),
            f"-DPython3_EXECUTABLE={sys.executable}",
            "-DCMAKE_BUILD_TYPE=Release",
            "-DUDA_BUILD_TESTS=OFF",
            "-DUDA_BUILD_CLI=OFF",
            "-DSKBUILD=ON",
        ]
        subprocess.run(configure, check=True)
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_core",
             f"-j{os.cpu_count() or 2}"],
            check=True,
        )

        built = list((build_dir / "python").glob("_core*.so"))
        if not built:
            raise RuntimeError("cmake did not produce the _core module")
        dest = Path(self.get_ext_fullpath(ext.name)).resolve()
        dest.parent.mkdir(parents=True, exist_ok=True)
        self.copy_file(str(built[0]), str(dest))


setup(
    packages=["uda"],
    package_dir={"uda": "python/uda"},
    ext_modules=[CMakeExtension("uda._core")],
    cmdclass={"build_ext": CMakeBuild},
)
