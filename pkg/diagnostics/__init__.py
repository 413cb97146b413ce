# diagnostics/__init__.py
