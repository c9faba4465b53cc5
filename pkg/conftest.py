"""Repository-level pytest configuration.

Having a conftest at the repository root puts this directory on sys.path
so the tests can import the top-level figures package next to the
installed viscoclosure package.
"""
