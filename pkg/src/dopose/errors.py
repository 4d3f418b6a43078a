"""Exception types shared across the toolkit."""


class DoposeError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(DoposeError):
    """Arrays that must share a (height, width) shape do not."""


class MalformedFile(DoposeError):
    """A dataset file exists but cannot be interpreted.

    Carries the offending path and, where known, the key inside the file.
    """

    def __init__(self, path, key=None, reason=""):
        self.path = str(path)
        self.key = key
        detail = f"{self.path}"
        if key is not None:
            detail += f" (key {key!r})"
        if reason:
            detail += f": {reason}"
        super().__init__(detail)


class MissingImage(DoposeError):
    """An rgb or depth image referenced by scene metadata is absent."""


class InconsistentViewIds(DoposeError):
    """View ids disagree between files of one scene, or are duplicated."""


class MissingWorldTransform(DoposeError):
    """A view lacks the camera-from-world transform needed for propagation."""

    def __init__(self, view_id):
        self.view_id = view_id
        super().__init__(f"view {view_id} has no world transform")


class MeshNotFound(DoposeError):
    """A ground-truth entry references an object id with no loadable mesh."""

    def __init__(self, obj_id):
        self.obj_id = obj_id
        super().__init__(f"no mesh for obj_id {obj_id}")


class TooFewPoints(DoposeError):
    """Not enough points to fit the requested model."""


class NoPlaneFound(DoposeError):
    """RANSAC found no plane with at least the configured inlier count."""


class EmptyMask(DoposeError):
    """An operation requiring a nonempty mask received an empty one."""


class SceneLocked(DoposeError):
    """Another writer currently holds the scene's advisory lock."""
