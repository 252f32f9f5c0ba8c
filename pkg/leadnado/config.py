import datetime
import json
import os
import pathlib
from typing import List, Optional

from jinja2 import Environment, FileSystemLoader
from loguru import logger
from pydantic import BaseModel, Field, model_validator

from leadnado.core import default_delta

package_dir = os.path.dirname(os.path.abspath(__file__))
template_dir = os.path.join(package_dir, "workflow/config")

MODELS = ["DM", "HM", "IC", "CM"]
EVENT_TYPES = ["linear", "merge_split"]


class InferenceConfig(BaseModel):
    """
    Parameters of the inference pipeline. `omega=None` selects the window by
    maximising the median coordination measure over `candidates`.
    """

    sigma: float = Field(default=0.5, gt=0, le=1)
    omega: Optional[int] = Field(default=None, ge=1)
    delta: Optional[int] = Field(default=None, ge=1)
    band: Optional[int] = Field(default=None, ge=0)
    candidates: Optional[List[int]] = None
    use_displacement: bool = True
    damping: float = Field(default=0.9, gt=0, lt=1)
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_delta(self):
        if self.omega is not None and self.delta is not None and self.delta > self.omega:
            raise ValueError(f"delta={self.delta} must not exceed omega={self.omega}")
        return self

    def resolved_delta(self, omega: int) -> int:
        return self.delta if self.delta is not None else default_delta(omega)


def get_user_input(prompt, default=None, is_boolean=False, choices=None):
    while True:
        user_input = (
            input(f"{prompt} [{'/'.join(choices) if choices else default}]: ")
            or default
        )
        if is_boolean:
            return str(user_input).lower() == "yes"
        if choices and user_input not in choices:
            print(f"Invalid choice. Please choose from {', '.join(choices)}.")
            continue
        return user_input


def _choose_many(prompt, default, choices) -> List[str]:
    while True:
        answer = get_user_input(prompt, default=default)
        picked = [a.strip() for a in str(answer).split(",") if a.strip()]
        if picked and all(p in choices for p in picked):
            return picked
        print(f"Invalid choice. Please choose from {', '.join(choices)}.")


def setup_configuration(template_data):
    username = os.getenv("USER", "unknown_user")
    today = datetime.datetime.now().strftime("%Y-%m-%d")
    project_name = get_user_input(
        "What is your project name?", default=f"{username}_project"
    ).replace(" ", "_")

    template_data.update(
        {
            "username": username,
            "project_date": today,
            "project_name": project_name,
        }
    )

    # Simulation
    template_data["models"] = _choose_many(
        "Leadership models to simulate (comma separated):", default="DM,HM", choices=MODELS
    )
    template_data["event_types"] = _choose_many(
        "Coordination event types (comma separated):",
        default="linear,merge_split",
        choices=EVENT_TYPES,
    )
    template_data["replicates"] = int(get_user_input("Datasets per model/event cell:", default="10"))
    template_data["n"] = int(get_user_input("Individuals per dataset:", default="30"))
    template_data["t_star"] = int(get_user_input("Time steps per dataset:", default="4000"))
    template_data["events"] = int(get_user_input("Coordination events per dataset:", default="5"))
    # event length must be a multiple of 8 and all events must fit in t*
    template_data["event_length"] = (template_data["t_star"] // template_data["events"]) // 8 * 8
    if template_data["event_length"] < 8:
        raise ValueError(
            f"{template_data['events']} events do not fit in {template_data['t_star']} time steps"
        )
    template_data["seed"] = int(get_user_input("Base random seed:", default="1"))

    if "IC" in template_data["models"]:
        template_data["ic_k"] = int(
            get_user_input("IC neighbour count:", default="5", choices=["3", "5", "10"])
        )
        template_data["ic_rho"] = float(
            get_user_input("IC activation probability:", default="0.5", choices=["0.25", "0.5", "0.75"])
        )
    else:
        template_data["ic_k"] = 5
        template_data["ic_rho"] = 0.5

    # Inference
    template_data["sigma"] = float(get_user_input("Following threshold sigma:", default="0.5"))
    template_data["auto_omega"] = get_user_input(
        "Choose the time window automatically? (yes/no)", default="yes", is_boolean=True
    )
    template_data["omega"] = (
        "None"
        if template_data["auto_omega"]
        else int(get_user_input("Time window omega:", default="100"))
    )

    # Baselines
    template_data["flock"] = get_user_input(
        "Run the FLOCK baseline? (yes/no)", default="yes", is_boolean=True
    )
    template_data["flock_grid"] = (
        get_user_input("Tune FLOCK parameters on a grid? (yes/no)", default="no", is_boolean=True)
        if template_data["flock"]
        else False
    )
    template_data["centrality"] = get_user_input(
        "Compare centrality measures on DM linear datasets? (yes/no)", default="no", is_boolean=True
    )


def create_config(rerun, leadnado_version, debug=False):
    env = Environment(loader=FileSystemLoader(template_dir), auto_reload=False)
    template = env.get_template("config_benchmark.yaml.jinja")

    template_data = {"leadnado_version": leadnado_version}
    setup_configuration(template_data)

    if rerun:
        dir_name = os.getcwd()
    else:
        dir_name = f"{template_data['project_date']}_benchmark_{template_data['project_name']}"
        os.makedirs(dir_name, exist_ok=True)

    config_path = pathlib.Path(dir_name) / "config_benchmark.yml"
    with open(config_path, "w") as file:
        file.write(template.render(template_data))

    logger.info(f"Directory '{dir_name}' has been created with the 'config_benchmark.yml' file.")
    if debug:
        with open(os.path.join(dir_name, "data.json"), "w") as file:
            json.dump(template_data, file)

    return config_path
