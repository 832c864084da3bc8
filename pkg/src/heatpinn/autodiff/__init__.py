from heatpinn.autodiff.adam import AdamState, adam_step
from heatpinn.autodiff.params import ParamStore, Slot
from heatpinn.autodiff.tape import Tensor

__all__ = ["AdamState", "ParamStore", "Slot", "Tensor", "adam_step"]
