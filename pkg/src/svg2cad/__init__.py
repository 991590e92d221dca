"""svg2cad: vector engineering drawings to parametric CAD operation sequences.

The package covers the full pipeline: SVG ingestion and tokenization, a
synthetic paired-data generator, the encoder / dual-decoder network with
command-guided parameter generation, the soft-target training objective,
evaluation metrics, and a minimal sketch-extrude geometry kernel used for
validity checking and Chamfer evaluation.
"""

__version__ = "0.1.0"

from .drawing import (  # noqa: F401
    DRAWING_LEN,
    UNUSED,
    DrawingSequence,
    SvgKind,
    SvgToken,
    ViewLabel,
    dequantize_coord,
    make_token,
    pad_drawing,
    quantize_coord,
)
from .cad import (  # noqa: F401
    CAD_LEN,
    BoolOp,
    CadCommand,
    CadKind,
    CadSequence,
    ExtentMode,
    merge_outputs,
    pad_cad,
    sequence_equal_within,
    validate_cad_sequence,
)
