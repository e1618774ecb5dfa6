"""Setup script for sdf-param."""

from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [
        line.strip()
        for line in fh
        if line.strip() and not line.startswith("#")
    ]

setup(
    name="sdf-param",
    version="0.3.0",
    author="sdf-param contributors",
    description="Learned surface parameterizations of neural SDFs onto sphere and polycube domains",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="https://github.com/yourusername/sdf-param",
    project_urls={
        "Bug Tracker": "https://github.com/yourusername/sdf-param/issues",
        "Documentation": "https://github.com/yourusername/sdf-param#readme",
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Multimedia :: Graphics :: 3D Modeling",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    python_requires=">=3.9",
    install_requires=requirements,
    entry_points={
        "console_scripts": [
            "sdf-param=sdf_param.cli:app",
        ],
    },
    include_package_data=True,
    package_data={
        "sdf_param": ["../config/*.yaml", "../config/presets/*.yaml"],
    },
)
