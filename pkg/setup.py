from setuptools import setup, find_packages

setup(
    name="gym_smooth_auctions",
    version="0.1.0",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "gymnasium>=1.0.0",
        "numpy>=1.24.0",
        "scipy>=1.11.0",
        "click>=8.1.0",
        "PyYAML>=6.0",
    ],
    extras_require={"test": ["pytest"]},
    entry_points={
        "console_scripts": ["smooth-auctions=gym_smooth_auctions.cli:cli"],
    },
)
