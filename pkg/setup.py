from setuptools import setup, find_packages

setup(
    name="lq-inverse",
    version="0.1.0",
    description="Model-based and model-free inverse solvers for linear-quadratic N-player games",
    author="Your Name",
    author_email="your.email@example.com",
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    package_data={"lq_inverse": ["fixtures/*.json", "schema/*.json"]},
    install_requires=[
        "numpy>=1.26.0",
        "scipy>=1.11.0",
        "pandas>=2.1.1",
        "tqdm>=4.66.1",
        "python-dotenv>=1.0.0",
        "pyarrow>=14.0.1",
        "pydantic>=2.5.0",
    ],
    entry_points={
        "console_scripts": ["lq-inverse=lq_inverse.__main__:main",],
    },
    python_requires=">=3.9",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
