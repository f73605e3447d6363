"""
Claim verification over planned, concurrently executed verification graphs.
"""
from . import static


def version():
    with open(static.filepath('VERSION'), 'r', encoding='utf-8') as version_file:
        return version_file.read().strip()
