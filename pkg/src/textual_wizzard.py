"""
Textual-based wizard for configuring a coverage experiment.
Provides a simulation-setting browser with the experiment size, level and
method options, and returns the chosen ExperimentConfig.
"""
from __future__ import annotations
import logging
from typing import Dict, Optional
from textual.app import App, ComposeResult
from textual.containers import Container, Horizontal, Vertical
from textual.widgets import Button, Checkbox, Footer, Header, Input, Select, Static, Tree

from errors import ConfigurationError
from models import METHODS, ExperimentConfig
from simgen import SETTING_IDS, get_setting
from utils import format_method

logger = logging.getLogger('SurvBand')

INT_FIELDS = ('n', 'n_controls', 'M', 'B', 'R', 'n_test', 'workers')
LEVEL_CHOICES = {'0.90': (0.90,), '0.95': (0.95,), 'both': (0.90, 0.95)}


def build_experiment_config(values: Dict[str, object], base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Turn wizard form values into an ExperimentConfig.

    Args:
        values: Form values: 'setting', the INT_FIELDS as text, 'levels' (a
            LEVEL_CHOICES key) and 'methods' (list of method tags).
        base: Configuration supplying everything the form does not set.

    Returns:
        The validated ExperimentConfig.

    Raises:
        ConfigurationError: A field is missing, non-numeric or out of range.
    """
    base = base or ExperimentConfig()
    parsed: Dict[str, int] = {}
    for name in INT_FIELDS:
        raw = str(values.get(name, '')).strip()
        try:
            parsed[name] = int(raw)
        except ValueError:
            raise ConfigurationError(f"'{name}' must be a whole number, got {raw!r}")
    level_key = str(values.get('levels', ''))
    if level_key not in LEVEL_CHOICES:
        raise ConfigurationError(f"Unknown level choice {level_key!r}")
    methods = tuple(m for m in METHODS if m in (values.get('methods') or ()))
    if not methods:
        raise ConfigurationError("Select at least one band method")
    net = base.net.with_overrides(n_controls=parsed.pop('n_controls'))
    return base.with_overrides(setting=int(values.get('setting', base.setting)), net=net,
                               levels=LEVEL_CHOICES[level_key], methods=methods, **parsed)


class ExperimentWizard(App):

    CSS = """
    Screen {
        background: $surface;
    }

    #main-container {
        width: 100%;
        height: 100%;
        padding: 1;
    }

    #title {
        width: 100%;
        height: 3;
        content-align: center middle;
        text-style: bold;
        background: $primary;
        color: $text;
        margin-bottom: 1;
    }

    #tree-container {
        width: 1fr;
        height: 100%;
        border: solid $primary;
        padding: 1;
    }

    #config-container {
        width: 2fr;
        height: auto;
        border: solid $primary;
        padding: 1;
        margin-left: 1;
    }

    .config-label {
        margin-top: 1;
        text-style: bold;
    }

    Button {
        width: 100%;
        margin-top: 1;
    }

    #status {
        width: 100%;
        height: 3;
        background: $surface-darken-1;
        content-align: center middle;
        margin-top: 1;
    }

    #error-message {
        width: 100%;
        height: auto;
        background: red;
        color: white;
        text-style: bold;
        padding: 1;
        display: none;
    }

    #error-message.visible {
        display: block;
    }
    """

    BINDINGS = [
        ("q", "quit", "Quit"),
        ("r", "run_experiment", "Run"),
    ]

    def __init__(self, base: Optional[ExperimentConfig] = None):
        super().__init__()
        self.base = base or ExperimentConfig()
        self.selected_setting: int = self.base.setting
        self.level_choice: str = 'both'
        logger.debug("ExperimentWizard initialized")

    def compose(self) -> ComposeResult:
        yield Header()
        with Container(id="main-container"):
            yield Static("Survival Band Coverage Experiment", id="title")
            yield Static("", id="error-message")
            with Horizontal():
                with Vertical(id="tree-container"):
                    yield Static("Simulation setting:", classes="config-label")
                    yield Tree("Settings", id="setting-tree")
                with Vertical(id="config-container"):
                    defaults = {'n': self.base.n, 'n_controls': self.base.net.n_controls, 'M': self.base.M,
                                'B': self.base.B, 'R': self.base.R, 'n_test': self.base.n_test,
                                'workers': self.base.workers}
                    for name in INT_FIELDS:
                        yield Static(f"{name}:", classes="config-label")
                        yield Input(value=str(defaults[name]), id=f"input-{name}")
                    yield Static("Nominal level:", classes="config-label")
                    yield Select([("90%", '0.90'), ("95%", '0.95'), ("90% and 95%", 'both')],
                                 value=self.level_choice, id="level-select")
                    for method in METHODS:
                        yield Checkbox(format_method(method), value=method in self.base.methods,
                                       id=f"method-{method}")
                    yield Button("Run", variant="primary", id="run-btn")
            yield Static(f"Selected: S{self.selected_setting}", id="status")
        yield Footer()

    def on_mount(self) -> None:
        tree = self.query_one("#setting-tree", Tree)
        tree.show_root = False
        groups = {True: tree.root.add("Proportional hazards", expand=True),
                  False: tree.root.add("Non-proportional hazards", expand=True)}
        for setting_id in SETTING_IDS:
            setting = get_setting(setting_id)
            groups[setting.proportional].add_leaf(f"{setting.label}: {setting.h0_spec}, d={setting.dim}",
                                                  data=setting_id)
        logger.info("Wizard interface loaded")

    def on_tree_node_selected(self, event: Tree.NodeSelected) -> None:
        if event.node.data is not None:
            self.selected_setting = int(event.node.data)
            self.query_one("#status", Static).update(f"Selected: S{self.selected_setting}")
            logger.debug(f"Setting selected: {self.selected_setting}")

    def on_select_changed(self, event: Select.Changed) -> None:
        if event.select.id == "level-select" and event.value in LEVEL_CHOICES:
            self.level_choice = event.value

    def on_button_pressed(self, event: Button.Pressed) -> None:
        if event.button.id == "run-btn":
            self.action_run_experiment()

    def action_run_experiment(self) -> None:
        values: Dict[str, object] = {name: self.query_one(f"#input-{name}", Input).value for name in INT_FIELDS}
        values['setting'] = self.selected_setting
        values['levels'] = self.level_choice
        values['methods'] = [m for m in METHODS if self.query_one(f"#method-{m}", Checkbox).value]
        error_widget = self.query_one("#error-message", Static)
        try:
            cfg = build_experiment_config(values, self.base)
        except ConfigurationError as e:
            logger.warning(f"Wizard input rejected: {e}")
            error_widget.update(f"⚠ ERROR: {e}")
            error_widget.add_class("visible")
            return
        error_widget.remove_class("visible")
        logger.info(f"Wizard submitted {cfg.setting_label} with M={cfg.M}, B={cfg.B}, R={cfg.R}")
        self.exit(cfg)
