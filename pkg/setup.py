from setuptools import find_packages, setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="hklab",
    version="0.3.0",
    description="Numerical lab for Hellinger-Kantorovich type distances, entropic divergences and Markov kernel inequalities.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={
        "hklab_lib": ["presets/*.yaml"],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Operating System :: OS Independent",
        "Environment :: Console",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.9",
        "POT>=0.9",
        "cvxpy>=1.3",
        "sympy>=1.10",
        "rich>=10.0.0,<14.0.0",
        "PyYAML>=5.0,<7.0",
    ],
    entry_points={
        "console_scripts": [
            "hklab=hklab_lib.cli:main",
        ],
    },
    include_package_data=True,
    license="MIT",
)
