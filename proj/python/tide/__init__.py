from ._tide import *  # noqa: F401,F403
