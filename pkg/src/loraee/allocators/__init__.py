from collections.abc import Callable
from typing import Any

from loraee.allocators.adr_allocator import AdrAllocator, DemodFloorTable, adr_assign
from loraee.allocators.base_allocator import Allocation, BaseAllocator
from loraee.allocators.eflora_allocator import EfLoraAllocator, eflora_assign
from loraee.allocators.mmalora_allocator import MmaloraAllocator
from loraee.allocators.rcst_allocator import RcstAllocator, rcst_assign
from loraee.domain.schemas import MaacHyperparams


def _uniform_mmalora(hyperparams: MaacHyperparams | None = None, **kwargs: Any) -> MmaloraAllocator:
    hp = (hyperparams or MaacHyperparams()).model_copy(update={"attention": "uniform"})
    return MmaloraAllocator(hp, label="mmalora-u", **kwargs)


ALLOCATORS: dict[str, Callable[..., BaseAllocator]] = {
    "rcst": RcstAllocator,
    "adr": AdrAllocator,
    "eflora": EfLoraAllocator,
    "mmalora": MmaloraAllocator,
    "mmalora-u": _uniform_mmalora,
}


def get_allocator(name: str, **kwargs: Any) -> BaseAllocator:
    """Instantiates a registered allocator; unknown names raise KeyError listing the choices."""
    try:
        factory = ALLOCATORS[name]
    except KeyError:
        raise KeyError(f"Unknown allocator '{name}'. Choices: {', '.join(sorted(ALLOCATORS))}") from None
    return factory(**kwargs)


__all__ = [
    "ALLOCATORS",
    "AdrAllocator",
    "Allocation",
    "BaseAllocator",
    "DemodFloorTable",
    "EfLoraAllocator",
    "MmaloraAllocator",
    "RcstAllocator",
    "adr_assign",
    "eflora_assign",
    "get_allocator",
    "rcst_assign",
]
