# audit/__init__.py
