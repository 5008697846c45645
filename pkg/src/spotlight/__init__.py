"""Content-based image retrieval and pattern spotting for document images.

Offline: region proposals -> embeddings -> binary index. Online: exhaustive
ranked search (image retrieval or pattern spotting), optional union
post-processing, and a faithful evaluation kit.
"""

__version__ = "0.1.0"
