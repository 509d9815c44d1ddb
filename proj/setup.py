"""Builds the pybind11 extension through the project's CMake tree so the
wheel and the development build share one build system."""

import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)
        # The extension lands in <output>/gatepro/ next to the package.
        out_dir = Path(self.get_ext_fullpath(ext.name)).resolve().parent

        subprocess.run(
            [
                "cmake",
                "-S",
                str(source_dir),
                "-B",
                str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                f"-DPython3_EXECUTABLE={sys.executable}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "gatepro_py", "-j"],
            check=True,
        )

        out_dir.mkdir(parents=True, exist_ok=True)
        staged = build_dir / "python" / "gatepro"
        for artifact in staged.glob("_core*"):
            self.copy_file(str(artifact), str(out_dir / artifact.name))


setup(
    ext_modules=[CMakeExtension("gatepro._core")],
    cmdclass={"build_ext": CMakeBuild},
)
