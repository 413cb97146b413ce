# tracing/__init__.py
