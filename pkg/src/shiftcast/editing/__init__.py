"""Edit generation and critique filtering for building per-factor observation sets."""

from .clients import (
    CriticProtocolError,
    CritiqueVerdict,
    HttpCriticClient,
    HttpEditClient,
    MockCriticClient,
    MockEditClient,
    ProtocolError,
    TransportError,
    create_critic_client,
    create_edit_client,
)
from .pipeline import (
    CameraFrame,
    EditBatchConfig,
    EditJob,
    EditJobResult,
    FactorEditBatch,
    Observation,
    build_factor_batch,
    run_edit_job,
    write_batch_dir,
    zoom_center,
)
from .templates import (
    SHORT_INSTRUCTIONS,
    TEMPLATE_NAMES,
    TemplateError,
    load_template,
    render_prompt,
    short_instruction,
    substitute,
)

__all__ = [
    "CameraFrame",
    "CriticProtocolError",
    "CritiqueVerdict",
    "EditBatchConfig",
    "EditJob",
    "EditJobResult",
    "FactorEditBatch",
    "HttpCriticClient",
    "HttpEditClient",
    "MockCriticClient",
    "MockEditClient",
    "Observation",
    "ProtocolError",
    "SHORT_INSTRUCTIONS",
    "TEMPLATE_NAMES",
    "TemplateError",
    "TransportError",
    "build_factor_batch",
    "create_critic_client",
    "create_edit_client",
    "load_template",
    "render_prompt",
    "run_edit_job",
    "short_instruction",
    "substitute",
    "write_batch_dir",
    "zoom_center",
]
