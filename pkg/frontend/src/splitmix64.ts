/**
 * SplitMix64, bit-for-bit identical to the engine's seeded random policy.
 * Driving the environment with this generator reproduces the exact action
 * stream of a native `acso rollout --policy random` run with the same seed.
 */

const MASK64 = (1n << 64n) - 1n;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: number | bigint) {
    this.state = BigInt(seed) & MASK64;
  }

  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return (z ^ (z >> 31n)) & MASK64;
  }

  below(n: number): number {
    return Number(this.nextU64() % BigInt(n));
  }
}
