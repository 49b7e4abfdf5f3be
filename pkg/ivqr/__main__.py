# -*- coding: utf-8 -*-

"""ivqr.__main__: executed when the ivqr directory is called as script."""

from .ivqr import main
main()
