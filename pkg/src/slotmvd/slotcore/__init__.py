from slotmvd.slotcore.losses import match_slots_to_instances, sup_loss
from slotmvd.slotcore.model import (
    BroadcastDecoder,
    ConvEncoder,
    SlotAttention,
    SlotModel,
    SlotModelConfig,
    ray_features,
)
from slotmvd.slotcore.oracle import ORACLE_SLOT_DIM, oracle_slots
from slotmvd.slotcore.pretrain import (
    SlotTrainConfig,
    extract_scene_slots,
    load_slot_cache,
    load_slot_model,
    mean_image_baseline,
    pretrain_slot_model,
    render_with_slots,
    save_slot_cache,
    save_slot_model,
)
from slotmvd.slotcore.slots import SlotSet

__all__ = [
    "BroadcastDecoder",
    "ConvEncoder",
    "ORACLE_SLOT_DIM",
    "SlotAttention",
    "SlotModel",
    "SlotModelConfig",
    "SlotSet",
    "SlotTrainConfig",
    "extract_scene_slots",
    "load_slot_cache",
    "load_slot_model",
    "match_slots_to_instances",
    "mean_image_baseline",
    "oracle_slots",
    "pretrain_slot_model",
    "ray_features",
    "render_with_slots",
    "save_slot_cache",
    "save_slot_model",
    "sup_loss",
]
