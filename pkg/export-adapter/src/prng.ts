/** Deterministic PRNG (splitmix64) so backbone weights are a pure function of the seed. */

export class SplitMix {
  private state: bigint;

  constructor(seed: number | bigint) {
    this.state = BigInt(seed) & 0xffffffffffffffffn;
  }

  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    return z ^ (z >> 31n);
  }

  /** uniform in [0, 1) with 53 bits of precision */
  nextFloat(): number {
    return Number(this.nextU64() >> 11n) / 2 ** 53;
  }

  /** standard normal via Box-Muller */
  nextGaussian(): number {
    const u = Math.max(this.nextFloat(), Number.MIN_VALUE);
    const v = this.nextFloat();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  }

  nextInt(bound: number): number {
    return Number(this.nextU64() % BigInt(bound));
  }
}

/** FNV-1a over a float array, folded to 8 hex chars; pins a weight set. */
export function fingerprintFloats(values: Float64Array | number[]): string {
  let hash = 0x811c9dc5;
  const view = new DataView(new ArrayBuffer(8));
  for (const v of values) {
    view.setFloat64(0, v, true);
    for (let b = 0; b < 8; b++) {
      hash ^= view.getUint8(b);
      hash = Math.imul(hash, 0x01000193) >>> 0;
    }
  }
  return hash.toString(16).padStart(8, "0");
}
