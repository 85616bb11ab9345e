/**
 * Gym-style bindings for the acso network-defense environment.
 *
 * The engine runs as a subprocess (`acso serve`) speaking line-delimited
 * JSON over stdio; observations arrive as base64 little-endian float32
 * buffers of the flattened history window.  One handle drives one engine
 * instance; handles are independent and must not be shared across
 * concurrent drivers.
 *
 *   const env = await EnvHandle.make("configs/tiny.json");
 *   let obs = await env.reset(7);
 *   const [next, reward, done, info] = await env.step(0);
 *   await env.close();
 */

import { type ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import { createInterface, type Interface } from "node:readline";

export { SplitMix64 } from "./splitmix64.js";

export interface SpaceInfo {
  nActions: number;
  tau: number;
  frameWidth: number;
  flatSize: number;
  gamma: number;
  mode: string;
}

export interface MakeOptions {
  /** Command used to launch the engine; defaults to ["python3", "-m", "acso"]. */
  engineCommand?: string[];
  /** Have the engine write rollout-identical episode logs here. */
  logDir?: string;
  /** Extra CLI flags, e.g. ["--apt-goal", "destroy"]. */
  extraArgs?: string[];
}

export type StepResult = [
  observation: Float32Array,
  reward: number,
  done: boolean,
  info: Record<string, unknown>,
];

interface Reply {
  ok: boolean;
  error?: string;
  [key: string]: unknown;
}

export class EnvHandle {
  readonly space: SpaceInfo;
  private proc: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private pending: Array<{ resolve: (r: Reply) => void; reject: (e: Error) => void }> = [];
  private closed = false;

  private constructor(proc: ChildProcessWithoutNullStreams, lines: Interface, space: SpaceInfo) {
    this.proc = proc;
    this.lines = lines;
    this.space = space;
  }

  static async make(configPath: string, options: MakeOptions = {}): Promise<EnvHandle> {
    const command = options.engineCommand ?? ["python3", "-m", "acso"];
    const args = [...command.slice(1), "serve", "--config", configPath];
    if (options.logDir) args.push("--log-dir", options.logDir);
    if (options.extraArgs) args.push(...options.extraArgs);
    const proc = spawn(command[0], args, { stdio: ["pipe", "pipe", "pipe"] });
    const lines = createInterface({ input: proc.stdout });

    const handle = new EnvHandle(proc, lines, {
      nActions: 0,
      tau: 0,
      frameWidth: 0,
      flatSize: 0,
      gamma: 0,
      mode: "",
    });
    lines.on("line", (raw) => handle.onLine(raw));
    proc.on("exit", () => handle.failPending(new Error("engine exited")));
    proc.stderr.on("data", () => {});

    const hello = await handle.request({ op: "handshake" });
    handle.mutableSpace({
      nActions: hello.n_actions as number,
      tau: hello.tau as number,
      frameWidth: hello.frame_width as number,
      flatSize: hello.flat_size as number,
      gamma: hello.gamma as number,
      mode: hello.mode as string,
    });
    return handle;
  }

  private mutableSpace(space: SpaceInfo): void {
    Object.assign(this.space as unknown as Record<string, unknown>, space);
  }

  private onLine(raw: string): void {
    const waiter = this.pending.shift();
    if (!waiter) return;
    try {
      waiter.resolve(JSON.parse(raw) as Reply);
    } catch (err) {
      waiter.reject(err as Error);
    }
  }

  private failPending(err: Error): void {
    while (this.pending.length) this.pending.shift()?.reject(err);
  }

  private request(message: Record<string, unknown>): Promise<Reply> {
    if (this.closed) return Promise.reject(new Error("handle is closed"));
    return new Promise((resolve, reject) => {
      this.pending.push({
        resolve: (reply) => {
          if (reply.ok) resolve(reply);
          else reject(new Error(reply.error ?? "engine error"));
        },
        reject,
      });
      this.proc.stdin.write(JSON.stringify(message) + "\n");
    });
  }

  private decodeObs(b64: string): Float32Array {
    const buf = Buffer.from(b64, "base64");
    const obs = new Float32Array(buf.buffer, buf.byteOffset, buf.byteLength / 4);
    if (obs.length !== this.space.flatSize && this.space.flatSize > 0) {
      throw new Error(`observation length ${obs.length} != flat size ${this.space.flatSize}`);
    }
    return obs;
  }

  async reset(seed: number): Promise<Float32Array> {
    const reply = await this.request({ op: "reset", seed });
    return this.decodeObs(reply.obs_b64 as string);
  }

  async step(action: number): Promise<StepResult> {
    const reply = await this.request({ op: "step", action });
    return [
      this.decodeObs(reply.obs_b64 as string),
      reply.reward as number,
      reply.done as boolean,
      reply.info as Record<string, unknown>,
    ];
  }

  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    try {
      await new Promise<void>((resolve) => {
        this.pending.push({ resolve: () => resolve(), reject: () => resolve() });
        this.proc.stdin.write(JSON.stringify({ op: "close" }) + "\n");
        setTimeout(resolve, 2000);
      });
    } finally {
      this.lines.close();
      this.proc.kill();
    }
  }
}

/** Functional aliases for drivers that prefer the flat calling style. */
export const make = EnvHandle.make.bind(EnvHandle);
export function reset(handle: EnvHandle, seed: number): Promise<Float32Array> {
  return handle.reset(seed);
}
export function step(handle: EnvHandle, action: number): Promise<StepResult> {
  return handle.step(action);
}
export function close(handle: EnvHandle): Promise<void> {
  return handle.close();
}
