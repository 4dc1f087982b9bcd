"""fbdgen: generate graphical IEC 61131-3 function block diagrams from
natural-language control narratives via a recorded/replayable LLM workflow."""

__version__ = "0.1.0"
