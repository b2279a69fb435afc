/**
 * Frame capture: webcam or dropped image -> small grayscale byte buffer.
 *
 * The server's extractor is a fixed random projection over raw grayscale
 * pixels, so the client only has to downsample and base64-encode. 32x32 is
 * plenty for the demo and keeps request bodies tiny.
 */

import { ImageSample } from "./api.js";

export const CAPTURE_SIZE = 32;

/** Box-filter an RGBA buffer down to outW x outH grayscale (pure, testable). */
export function downsampleToGray(
  rgba: Uint8ClampedArray,
  width: number,
  height: number,
  outW: number,
  outH: number,
): Uint8Array {
  if (rgba.length !== width * height * 4) {
    throw new Error(`expected ${width * height * 4} RGBA bytes, got ${rgba.length}`);
  }
  const out = new Uint8Array(outW * outH);
  for (let oy = 0; oy < outH; oy++) {
    const y0 = Math.floor((oy * height) / outH);
    const y1 = Math.max(y0 + 1, Math.floor(((oy + 1) * height) / outH));
    for (let ox = 0; ox < outW; ox++) {
      const x0 = Math.floor((ox * width) / outW);
      const x1 = Math.max(x0 + 1, Math.floor(((ox + 1) * width) / outW));
      let sum = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) {
          const i = (y * width + x) * 4;
          // integer luma approximation (BT.601 weights)
          sum += (rgba[i] * 77 + rgba[i + 1] * 150 + rgba[i + 2] * 29) >> 8;
        }
      }
      out[oy * outW + ox] = Math.round(sum / ((y1 - y0) * (x1 - x0)));
    }
  }
  return out;
}

export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < bytes.length; i++) {
    binary += String.fromCharCode(bytes[i]);
  }
  return btoa(binary);
}

export function toImageSample(gray: Uint8Array, width: number, height: number): ImageSample {
  if (gray.length !== width * height) {
    throw new Error(`expected ${width * height} gray bytes, got ${gray.length}`);
  }
  return { width, height, pixels_base64: bytesToBase64(gray) };
}

/** Grab the current frame of a video/image element as an ImageSample. */
export function grabFrame(
  source: HTMLVideoElement | HTMLImageElement,
  size: number = CAPTURE_SIZE,
): ImageSample {
  const canvas = document.createElement("canvas");
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas context unavailable");
  ctx.drawImage(source, 0, 0, size, size);
  const rgba = ctx.getImageData(0, 0, size, size).data;
  return toImageSample(downsampleToGray(rgba, size, size, size, size), size, size);
}
