"""Allow ``python -m clickmodels``."""
from .cli import main

main(prog_name="clickmodels")  # pylint: disable=no-value-for-parameter
