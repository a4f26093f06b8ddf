import numpy as np
import pytest

from ransnn.idx import IdxTensor, LabeledDataset, write_idx
from ransnn.numerics import Rng


def blob_dataset(num_classes: int, samples_per_class: int, side: int = 12,
                 seed: int = 7) -> LabeledDataset:
    """Synthetic image dataset with one bright patch per class: easy to
    classify, shaped like the real inputs (u8, square, labels in [0, C))."""
    rng = Rng(seed, 99)
    pixels = side * side
    block = pixels // num_classes
    images, labels = [], []
    for c in range(num_classes):
        for _ in range(samples_per_class):
            img = (rng.uniform(0, 30, pixels)).astype(np.uint8)
            lo = c * block
            img[lo:lo + block] = rng.uniform(160, 255, block).astype(np.uint8)
            images.append(img)
            labels.append(c)
    order = Rng(seed, 100).permutation(len(images))
    images = np.stack(images)[order]
    labels = np.asarray(labels, dtype=np.int64)[order]
    return LabeledDataset(images=images, labels=labels, num_classes=num_classes)


def write_dataset_idx(ds: LabeledDataset, side: int, dir_path, prefix: str,
                      gz: bool = False) -> tuple[str, str]:
    """Write a LabeledDataset as a pair of IDX files; returns their paths."""
    n = len(ds)
    images = IdxTensor(dtype_code=0x08, dims=(n, side, side),
                       data=ds.images.reshape(n, side, side))
    labels = IdxTensor(dtype_code=0x08, dims=(n,),
                       data=ds.labels.astype(np.uint8))
    suffix = ".gz" if gz else ""
    img_path = str(dir_path / f"{prefix}-images-idx3-ubyte{suffix}")
    lab_path = str(dir_path / f"{prefix}-labels-idx1-ubyte{suffix}")
    write_idx(images, img_path, gz=gz)
    write_idx(labels, lab_path, gz=gz)
    return img_path, lab_path


@pytest.fixture
def small_blobs():
    return blob_dataset(num_classes=3, samples_per_class=40, side=12, seed=7)
