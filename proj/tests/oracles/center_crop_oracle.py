"""Reference values for the center-crop + resize loader test.

Builds the same 300x200 gradient image as the C++ test, crops the centered
200x200 square, resizes it to 256x256 with Pillow's bilinear filter and prints
the four corner pixels.
"""
import numpy as np
from PIL import Image

W, H, SIZE = 300, 200, 256


def pattern():
    y, x = np.mgrid[0:H, 0:W]
    r = np.round(x * 255.0 / (W - 1))
    g = np.round(y * 255.0 / (H - 1))
    b = np.round((x + y) * 255.0 / (W + H - 2))
    return np.stack([r, g, b], axis=-1).astype(np.uint8)


def main():
    img = Image.fromarray(pattern(), "RGB")
    side = min(W, H)
    left, top = (W - side) // 2, (H - side) // 2
    crop = img.crop((left, top, left + side, top + side)).resize((SIZE, SIZE), Image.BILINEAR)
    a = np.asarray(crop)
    for name, (yy, xx) in {"top_left": (0, 0), "top_right": (0, SIZE - 1),
                           "bottom_left": (SIZE - 1, 0), "bottom_right": (SIZE - 1, SIZE - 1)}.items():
        print(name, a[yy, xx].tolist())


if __name__ == "__main__":
    main()
