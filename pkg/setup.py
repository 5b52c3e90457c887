#!/usr/bin/env python
from os.path import exists

from setuptools import setup

setup(
    name="svbrdf-uq",
    version="0.1.0",
    description="SVBRDF map prediction with render-space uncertainty and active learning",
    packages=["svbrdf_uq"],
    package_data={"svbrdf_uq": ["data/*.json"]},
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.7",
        "pandas>=1.1",
        "matplotlib>=3.3",
        "pypng>=0.0.20",
    ],
    tests_require=["pytest"],
    entry_points={"console_scripts": ["svbrdf-uq=svbrdf_uq.cli:main"]},
    long_description=open("README.md").read() if exists("README.md") else "",
    long_description_content_type="text/markdown",
    zip_safe=False,
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Intended Audience :: Developers",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: Implementation :: CPython",
        "Topic :: Multimedia :: Graphics :: 3D Rendering",
    ],
)
