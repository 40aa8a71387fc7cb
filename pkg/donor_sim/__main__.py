"""``python -m donor_sim <command>`` runs the simulator commands without FLASK_APP."""
from flask.cli import FlaskGroup

from . import create_app

cli = FlaskGroup(create_app=create_app, add_default_commands=False, add_version_option=False)


if __name__ == "__main__":
    cli(prog_name="donor-sim")
