"""Multi-year solvency assessment with nested simulations and polynomial proxies."""
