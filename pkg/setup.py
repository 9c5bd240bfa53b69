"""
Setup script for CattleAct
Mirrors pyproject.toml for tools that still call setup.py directly
"""
from setuptools import setup, find_packages
from pathlib import Path

# Read README for long description
readme_path = Path(__file__).parent / "README.md"
long_description = readme_path.read_text(encoding="utf-8") if readme_path.exists() else ""

setup(
    name="cattleact",
    version="0.3.0",
    description="Cattle action and interaction recognition with joint action-interaction representations "
                "and GPS identity matching",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="CattleAct Contributors",
    packages=find_packages(exclude=["tests", "configs", "scripts"]),
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.24.0",
        "torch>=2.1.0",
        "scipy>=1.10.0",
        "scikit-learn>=1.3.0",
        "Pillow>=10.0.0",
        "pydantic>=2.0.0",
        "pydantic-settings>=2.0.0",
    ],
    extras_require={
        "test": [
            "pytest>=7.4.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "cattleact=src.cli:run",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Image Recognition",
    ],
    keywords="cattle livestock action-recognition interaction contrastive gps homography",
    license="MIT",
)
