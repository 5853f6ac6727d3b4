"""Package metadata for csl-reid."""

import os

from setuptools import find_packages, setup

PACKAGE_VERSION_NAME = os.getenv("PACKAGE_VERSION_NAME", "0.0-dev0")


def read(file_name):
    """Get the contents of a file at the root of the package.

    Args:
        file_name (str): The name of the file at the root of the package
            to get the contents of.

    Returns:
        str: The contents of the file.

    """
    with open(file_name) as file_:
        contents = file_.read()
    return contents


setup(
    name="csl-reid",
    version=PACKAGE_VERSION_NAME,
    description="Color space learning lab for visible-infrared and cloth-changing person re-identification.",
    long_description=read("README.md"),
    long_description_content_type="text/markdown",
    # Package contents
    python_requires=">=3.8",
    packages=find_packages("src"),
    package_dir={"": "src"},
    classifiers=[
        "Operating System :: Unix",
        "Programming Language :: Python :: 3.8",
    ],
    platforms=["Unix", "Darwin"],
    entry_points={
        "console_scripts": [
            "csl-reid=csl_reid.launcher:main",
        ],
    },
    install_requires=[
        "numpy>=1.20",
        "pandas>=1.3",
        "Pillow>=8.0",
        "pyparsing>=2.4",
        "tqdm>=4.60",
    ],
    extras_require={
        # packages required to run the tests go in the "test" extra
        "test": [
            "pytest>4",
            "pytest-cov",
        ],
    },
)
