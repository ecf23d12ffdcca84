from isr.api import presets, run_compare, run_sweep

__all__ = ["run_sweep", "run_compare", "presets"]
