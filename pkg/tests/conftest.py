def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: full-length training runs (deselect with -m 'not slow')"
    )
