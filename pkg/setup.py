#! /usr/bin/env python

from setuptools import setup


setup(
    name="ivqr",
    packages=["ivqr"],
    version="0.1",
    description="Gradient wild bootstrap inference for instrumental variable quantile regression with clustered data.",
    long_description=open('README.md').read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "License :: OSI Approved :: GNU General Public License v2 or later (GPLv2+)",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Mathematics"
    ],
    keywords="econometrics, quantile regression, instrumental variables, bootstrap, clustered data",
    license="GPL2",
    python_requires=">=3.8",
    install_requires=["pyyaml", "numpy>=1.17", "pandas>=1.5", "scipy>=1.7", "scikit-learn>=1.0", "joblib"],
    extras_require={"test": ["pytest"]},
    entry_points={
        "console_scripts": [
            'ivqr = ivqr.ivqr:main',
        ],
    },
    package_data={"ivqr": ["ivqr_config.yaml"]},
    include_package_data=True
)
