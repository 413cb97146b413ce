# aggregation/__init__.py
