"""Hook for plugging a real detection model behind the wire protocol.

Subclass ModelAdapter, implement predict(), and serve it:

    from detector_sidecar.adapter import ModelAdapter
    from detector_sidecar.server import RequestHandler, serve_stdio

    class MyModel(ModelAdapter):
        def predict(self, image, role, region, input_size):
            boxes = self._model.infer(load_image(image), region, input_size)
            return [{"label": ..., "conf": ..., "box": [...]} for b in boxes]

    serve_stdio(RequestHandler(adapter=MyModel()))

predict() must return detections in the request's coordinate frame: the
crop frame of the region's letterbox transform when a region was given,
the full image frame otherwise. Confidences must lie in [0, 1].
"""

from __future__ import annotations


class ModelAdapter:
    def predict(
        self, image: str, role: str, region: list[float] | None, input_size: int
    ) -> list[dict]:
        raise NotImplementedError("plug a model in by overriding ModelAdapter.predict")

    def close(self) -> None:
        """Optional: release model resources at shutdown."""
