from setuptools import setup, find_packages

from permutest.version import version

setup(
    name="permutest",
    version=version,
    author="permutest maintainers",
    description="Exact and studentized permutation tests with a reproducible Monte Carlo harness",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    license="MIT",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={"permutest": ["config.yaml", "core/plans/*.yaml"]},
    install_requires=[
        "pydantic>=2.12.0",
        "pyyaml>=6.0.3",
        "python-dotenv>=1.1.1",
        "colorama>=0.4.6",
        "numpy>=1.26.0",
        "scipy>=1.11.0",
        "pandas>=2.0.0",
    ],
    extras_require={
        "dev": ["pytest>=8.0.0", "hypothesis>=6.100.0"],
    },
    classifiers=[
        "Programming Language :: Python :: 3.10",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    entry_points={
        "console_scripts": [
            "permutest = permutest.cli.cli_entry:main",
        ],
    },
    python_requires=">=3.10,<4.0",
)
