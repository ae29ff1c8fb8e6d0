// Progressive image assembly: rows arrive as base64 RGB and land at their
// declared y, whatever the arrival order. The pixel buffer is RGBA so a
// canvas can blit it directly.

export const IMAGE_WIDTH = 320;

export class ImageAssembler {
  readonly width = IMAGE_WIDTH;
  readonly pixels: Uint8ClampedArray<ArrayBuffer>;
  private readonly rowSeen: boolean[];
  private rowsDone = 0;

  constructor(readonly height: number) {
    this.pixels = new Uint8ClampedArray(this.width * height * 4);
    this.rowSeen = new Array(height).fill(false);
  }

  applyRow(rowIndex: number, rgbBase64: string): void {
    if (rowIndex < 0 || rowIndex >= this.height) return;
    const rgb = decodeBase64(rgbBase64);
    if (rgb.length !== this.width * 3) return;
    const out = this.pixels;
    let src = 0;
    let dst = rowIndex * this.width * 4;
    for (let x = 0; x < this.width; x++) {
      out[dst] = rgb[src];
      out[dst + 1] = rgb[src + 1];
      out[dst + 2] = rgb[src + 2];
      out[dst + 3] = 255;
      src += 3;
      dst += 4;
    }
    if (!this.rowSeen[rowIndex]) {
      this.rowSeen[rowIndex] = true;
      this.rowsDone += 1;
    }
  }

  rowCount(): number {
    return this.rowsDone;
  }

  isComplete(): boolean {
    return this.rowsDone === this.height;
  }

  /** Row-major RGB bytes (drops alpha), for comparisons and exports. */
  toRgbBytes(): Uint8Array {
    const rgb = new Uint8Array(this.width * this.height * 3);
    let src = 0;
    let dst = 0;
    for (let i = 0; i < this.width * this.height; i++) {
      rgb[dst] = this.pixels[src];
      rgb[dst + 1] = this.pixels[src + 1];
      rgb[dst + 2] = this.pixels[src + 2];
      src += 4;
      dst += 3;
    }
    return rgb;
  }
}

export function decodeBase64(data: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(data);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // Node (tests)
  return new Uint8Array(Buffer.from(data, "base64"));
}
