/**
 * Client for the ssrd/1 bridge protocol: one JSON object per line, one
 * response per request, over TCP or a spawned server's stdio.
 */

import { ChildProcess, spawn } from "node:child_process";
import * as net from "node:net";

export const PROTOCOL_VERSION = "ssrd/1";

export interface StatePayload {
  invested: number[];
  sequence: number[][];
  n: number;
  x: number[];
  x_shape: number[];
  g: number[];
  g_shape: number[];
}

export interface EnvView {
  state: StatePayload;
  mask: number[];
  min_size: number;
  max_size: number;
}

export interface StepView extends EnvView {
  reward: number;
  done: boolean;
}

export interface InitInfo {
  scenario: string;
  n_regions: number;
  k: number;
  horizon: number;
}

export interface EvalResult {
  option_value: number;
  mean_stop_times: number[];
  seed: number;
  n_paths: number;
}

interface Transport {
  send(line: string): void;
  onLine(cb: (line: string) => void): void;
  close(): void;
}

class SocketTransport implements Transport {
  private buffer = "";
  constructor(private sock: net.Socket) {}

  send(line: string): void {
    this.sock.write(line + "\n");
  }

  onLine(cb: (line: string) => void): void {
    this.sock.on("data", (chunk) => {
      this.buffer += chunk.toString("utf-8");
      let idx;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        if (line.trim()) cb(line);
      }
    });
  }

  close(): void {
    this.sock.destroy();
  }
}

class ProcessTransport implements Transport {
  private buffer = "";
  constructor(private child: ChildProcess) {}

  send(line: string): void {
    this.child.stdin!.write(line + "\n");
  }

  onLine(cb: (line: string) => void): void {
    this.child.stdout!.on("data", (chunk) => {
      this.buffer += chunk.toString("utf-8");
      let idx;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        if (line.trim()) cb(line);
      }
    });
  }

  close(): void {
    this.child.stdin!.end();
    this.child.kill();
  }
}

export class BridgeClient {
  private transport: Transport;
  private nextId = 1;
  private pending = new Map<number, { resolve: (v: any) => void; reject: (e: Error) => void }>();

  private constructor(transport: Transport) {
    this.transport = transport;
    transport.onLine((line) => this.dispatch(line));
  }

  static async connectTcp(host: string, port: number): Promise<BridgeClient> {
    const sock = await new Promise<net.Socket>((resolve, reject) => {
      const s = net.createConnection({ host, port }, () => resolve(s));
      s.on("error", reject);
    });
    sock.setNoDelay(true);
    return new BridgeClient(new SocketTransport(sock));
  }

  /** Spawn a stdio server, e.g. spawnStdio("python3", ["-m","ssrd.cli","serve","--stdio"]). */
  static spawnStdio(command: string, args: string[]): BridgeClient {
    const child = spawn(command, args, { stdio: ["pipe", "pipe", "inherit"] });
    return new BridgeClient(new ProcessTransport(child));
  }

  private dispatch(line: string): void {
    let msg: any;
    try {
      msg = JSON.parse(line);
    } catch {
      return; // server never sends non-JSON; ignore stray noise
    }
    const waiter = this.pending.get(msg.id);
    if (!waiter) return;
    this.pending.delete(msg.id);
    if (msg.ok) {
      waiter.resolve(msg);
    } else {
      const err = new Error(`${msg.error?.code}: ${msg.error?.message}`);
      (err as any).code = msg.error?.code;
      waiter.reject(err);
    }
  }

  request(verb: string, payload: Record<string, unknown> = {}): Promise<any> {
    const id = this.nextId++;
    const line = JSON.stringify({ verb, id, ...payload });
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.transport.send(line);
    });
  }

  async hello(): Promise<string[]> {
    const resp = await this.request("hello", { version: PROTOCOL_VERSION });
    return resp.scenarios;
  }

  async init(scenario: string, nPaths?: number): Promise<InitInfo> {
    const payload: Record<string, unknown> = { scenario };
    if (nPaths !== undefined) payload.n_paths = nPaths;
    return this.request("init", payload);
  }

  async reset(episodeSeed: number): Promise<EnvView> {
    return this.request("reset", { episode_seed: episodeSeed });
  }

  async step(action: number[]): Promise<StepView> {
    return this.request("step", { action });
  }

  async mask(): Promise<EnvView> {
    return this.request("mask", {});
  }

  async evalSequence(sequence: number[][], seed: number): Promise<EvalResult> {
    return this.request("eval", { sequence, seed });
  }

  async close(): Promise<void> {
    try {
      await this.request("close", {});
    } finally {
      this.transport.close();
    }
  }
}
