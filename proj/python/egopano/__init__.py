"""Python bindings for the egopano panorama and analytics library."""

import json

from . import _core
from ._core import EgopanoError, Service, iou, svd3

__all__ = ["EgopanoError", "Service", "analytics", "iou", "session_meta", "stitch", "svd3"]


def session_meta(session_dir):
    return json.loads(_core.session_meta(str(session_dir)))


def stitch(session_dir, params=None):
    """Build a panorama. Returns (png_bytes, report_dict)."""
    png, report = _core.stitch(str(session_dir), json.dumps(params) if params else "")
    return png, json.loads(report)


def analytics(session_dir, panorama=None, iou_threshold=0.5, missing_frames=15):
    doc = json.dumps(panorama) if panorama is not None else ""
    return json.loads(_core.analytics(str(session_dir), doc, iou_threshold, missing_frames))
