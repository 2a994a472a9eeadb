import os
import sys
from setuptools import setup, find_packages
from setuptools.command.install import install

# single source of truth for the version
exec(open("./velander/version.py").read())
VERSION = __version__

with open('README.md') as fp:
    long_description = fp.read()


class VerifyVersionCommand(install):
    """Custom command to verify that the git tag matches our version"""
    description = 'verify that the git tag matches our version'

    def run(self):
        tag = os.getenv('CIRCLE_TAG')

        if tag != VERSION:
            info = "Git tag: {0} does not match the version of velander: {1}".format(
                tag, VERSION
            )
            sys.exit(info)


setup(
    name='velander',
    version=VERSION,
    license='Apache License 2.0',
    author='velander developers',
    description='Extreme value models of customer peak load '
                'from energy consumption',
    install_requires=[
        'SQLAlchemy>=1.4',
        'numpy>=1.17',
        'scipy>=1.4',
        'pandas>=1.0',
        'scikit-learn>=0.22',
        'joblib>=0.14'
    ],
    extras_require={
        'postgres': ['psycopg2>=2.7.4'],
    },
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['test', 'docs']),
    entry_points={
        'console_scripts': ['velander=velander.cli:main'],
    },
    classifiers=[
        'Intended Audience :: Developers',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Apache Software License',
        'Natural Language :: English',
        'Topic :: Scientific/Engineering :: Mathematics'
    ],
    python_requires='>=3.7',
    cmdclass={
        'verify': VerifyVersionCommand,
    }
)
