"""
Kappa toolkit CLI
"""
import logging
import sys

from src.cli import main

if __name__ == '__main__':
    # Configure logging FIRST; --log-level adjusts the root level later
    logging.basicConfig(
        level=logging.WARNING,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    sys.exit(main())
