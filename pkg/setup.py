#!/usr/bin/env python

"""The setup script."""

from setuptools import setup, find_packages

with open("README.rst") as readme_file:
    readme = readme_file.read()

with open("HISTORY.rst") as history_file:
    history = history_file.read()

# fmt: off
__version__ = '0.1.0'
# fmt: on

requirements = [
    "torch>=2.0",
    "numpy>=1.17",
    "pandas",
    "matplotlib",
    "celluloid",
    "pillow",
    "tqdm",
    "cma>=3.0",
    "pyyaml>=5.1",
    "click>=7.0",
]

setup_requirements = [
    "pytest-runner",
]

test_requirements = ["pytest>=3"]

version = __version__

setup(
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 2 - Pre-Alpha",
        "Intended Audience :: Developers",
        "Intended Audience :: Education",
        "Intended Audience :: Science/Research",
        "Natural Language :: English",
        "Topic :: Scientific/Engineering",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Operating System :: OS Independent",
    ],
    description="Learning planar non-prehensile manipulation with a placement policy and a post-contact policy.",
    entry_points={
        "console_scripts": [
            "pushtorch=pushtorch.cli:main",
        ],
    },
    install_requires=requirements,
    long_description=readme + "\n\n" + history,
    include_package_data=True,
    keywords="pushtorch",
    name="pushtorch",
    packages=find_packages(include=["pushtorch", "pushtorch.*"]),
    setup_requires=setup_requirements,
    test_suite="tests",
    tests_require=test_requirements,
    version=__version__,
    zip_safe=False,
)
