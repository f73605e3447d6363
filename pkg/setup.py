import setuptools

with open("README.md", "r") as readme_file:
    LONG_DESCRIPTION = readme_file.read()

with open("verigraph/static/VERSION", "r") as version_file:
    VERSION = version_file.read().strip()

with open(".python-version") as mpv_file:
    MINIMUM_PYTHON_VERSION = mpv_file.read().strip()

setuptools.setup(
    name="verigraph",
    version=VERSION,
    author="verigraph contributors",
    description="Claim verification with dynamically planned, concurrently executed verification graphs.",
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    install_requires=[
       'requests',
       'click>=8.0',
       "click-logging",
       "tenacity",
       "networkx",
       "scikit-learn",
    ],
    extras_require={
        'dev': ['pytest'],
    },
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=f">={MINIMUM_PYTHON_VERSION}",
    entry_points={
        'console_scripts': [
            'verigraph = verigraph.cli:main',
        ],
    },
    package_data = {
        'verigraph': ['static/*','static/*/*'],
    },
)
