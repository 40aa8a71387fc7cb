"""``flask --app app <command>`` entry point; ``python app.py <command>`` also works."""
from donor_sim import create_app
from donor_sim.__main__ import cli

app = create_app()


if __name__ == "__main__":
    cli(prog_name="donor-sim")
