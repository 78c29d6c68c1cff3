# __main__.py
import sys
from pathlib import Path

try:
    from lmsf.cli.lmsf_cli import lmsf_cli_main
except Exception:
    base_package_path = Path(__file__).parent.parent
    print(f"adding base_package_path: {base_package_path} : to sys.path")
    sys.path.insert(0, str(base_package_path))  # add parent directory to sys.path
    from lmsf.cli.lmsf_cli import lmsf_cli_main


def main():
    sys.exit(lmsf_cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
