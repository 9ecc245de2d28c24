"""Builds the pybind11 module by driving the repository's CMake project."""
import shutil
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
        source = Path(__file__).parent.resolve()
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)
        subprocess.run(
            ["cmake", "-S", str(source), "-B", str(build_dir), "-G", "Ninja",
             "-DCMAKE_BUILD_TYPE=Release",
             f"-DPython3_EXECUTABLE={sys.executable}"],
            check=True)
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "spinloc_py"],
            check=True)

        built = sorted(build_dir.glob("spinloc.*.so")) or sorted(
            build_dir.glob("spinloc.so"))
        if not built:
            raise RuntimeError(f"no module produced under {build_dir}")
        out = Path(self.get_ext_fullpath(ext.name)).resolve()
        out.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built[-1], out)


setup(ext_modules=[CMakeExtension("spinloc")], cmdclass={"build_ext": CMakeBuild})
