from setuptools import setup, find_packages

setup(
    name="genfilter",
    version="0.1.0",
    description="Nonlinear filtering, mutual information and forking experiments for SDE generative models",
    author="genfilter developers",
    packages=find_packages(exclude=["examples", "examples.*"]),
    package_data={"genfilter": ["default_config.yaml"]},
    install_requires=[
        "fire>=0.5.0",
        "PyYAML>=6.0",
        "numpy>=1.22",
        "scipy>=1.8",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    entry_points={
        "console_scripts": [
            "genfilter=genfilter.cli:main",
        ],
    },
    python_requires=">=3.8",
)
