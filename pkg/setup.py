from setuptools import setup

setup(
    name="kawactl",
    version="1.0.0",
    description="Kawahara boundary-value solver and integral-overdetermination control synthesis",
    py_modules=[
        "database", "errors", "fixed_point", "main", "mesh", "monitoring", "observables",
        "omega", "scenario", "solver", "synthesis", "utils", "verify",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.26",
        "scipy>=1.11",
        "sympy>=1.12",
        "python-dotenv>=1.0",
        "pydantic>=2.5,<3",
        "psutil>=5.9",
        "tqdm>=4.66",
    ],
    extras_require={"test": ["pytest>=7.4"]},
    entry_points={"console_scripts": ["kawactl=main:cli"]},
)
