"""Build script.

The package is pure Python and fully functional without compilation.  When
Cython and a C compiler are available, the hot modules (protocol state
machines, codecs, simulator, and the interleaving-search kernel) are compiled
to extension modules.  Compiled modules shadow their .py sources at import
time; without them the same .py files run unmodified, so a failed build only
costs speed.
"""

import os

from setuptools import setup

HOT_MODULES = [
    "src/ccnpaxos/naming.py",
    "src/ccnpaxos/wire.py",
    "src/ccnpaxos/paxos.py",
    "src/ccnpaxos/group.py",
    "src/ccnpaxos/netsim.py",
    "src/ccnpaxos/node.py",
    "src/ccnpaxos/_kernel/_search.pyx",
]


def extensions():
    if os.environ.get("CCNPAXOS_PURE"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    exts = []
    for module in HOT_MODULES:
        if not os.path.exists(module):
            continue
        try:
            exts += cythonize(
                [module],
                compiler_directives={"language_level": "3"},
                quiet=True,
            )
        except Exception:
            continue  # a module that will not compile just stays pure
    return exts


setup(ext_modules=extensions())
