"""Builds the Rust extension with cargo and bundles it into the package.

No maturin/setuptools-rust dependency: the cdylib is compiled by cargo
and copied into graphmf/ before the normal build steps run.
"""

import pathlib
import shutil
import subprocess

from setuptools import setup
from setuptools.command.build_py import build_py

HERE = pathlib.Path(__file__).resolve().parent
WORKSPACE = HERE.parent


def build_native():
    subprocess.check_call(
        ["cargo", "build", "-p", "graphmf-py", "--release"], cwd=WORKSPACE
    )
    so = WORKSPACE / "target" / "release" / "libgraphmf_py.so"
    shutil.copy2(so, HERE / "graphmf" / "graphmf_py.so")


class BuildPyWithNative(build_py):
    def run(self):
        build_native()
        super().run()


setup(cmdclass={"build_py": BuildPyWithNative})
