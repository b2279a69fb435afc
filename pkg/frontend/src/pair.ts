/**
 * A paired TL/CL session driven by one command log.
 *
 * The whole demo is comparative, so the pair is the unit of control: both
 * sessions share one seed and config, and every sample and train command
 * goes to both in the same order. The log records each command, which makes
 * any run replayable onto a fresh pair.
 */

import {
  ApiClient,
  Prediction,
  Sample,
  SessionRequest,
  TrainEvent,
  TrainScope,
} from "./api.js";

export interface PairOptions {
  dim?: number;
  classes: number;
  seed: number;
  capacity?: number;
  quota?: number;
  epochsPerBatch?: number;
  learningRate?: number;
}

export type PairCommand =
  | { kind: "sample"; cls: number; sample: Sample }
  | { kind: "train"; scope: TrainScope }
  | { kind: "reset" };

export interface PairTrainResult {
  tl: TrainEvent;
  cl: TrainEvent;
}

export class SessionPair {
  readonly log: PairCommand[] = [];

  private constructor(
    private api: ApiClient,
    public readonly tlId: string,
    public readonly clId: string,
    public readonly options: PairOptions,
  ) {}

  static async create(api: ApiClient, options: PairOptions): Promise<SessionPair> {
    const train_config = {
      seed: options.seed,
      ...(options.epochsPerBatch !== undefined && { epochs_per_batch: options.epochsPerBatch }),
      ...(options.learningRate !== undefined && { learning_rate: options.learningRate }),
    };
    const base: SessionRequest = {
      mode: "tl",
      dim: options.dim,
      classes: options.classes,
      train_config,
    };
    const tl = await api.createSession(base);
    const cl = await api.createSession({
      ...base,
      mode: "cl",
      buffer_config: {
        seed: options.seed,
        ...(options.capacity !== undefined && { capacity: options.capacity }),
        ...(options.quota !== undefined && { quota: options.quota }),
      },
    });
    return new SessionPair(api, tl.id, cl.id, options);
  }

  /** Feed one sample to both sessions; returns the staged count per class. */
  async addSample(cls: number, sample: Sample): Promise<Record<string, number>> {
    const tlCounts = await this.api.addSample(this.tlId, cls, sample);
    const clCounts = await this.api.addSample(this.clId, cls, sample);
    this.log.push({ kind: "sample", cls, sample });
    // both sessions saw the identical stream, so their staging must agree
    for (const key of Object.keys(tlCounts.staged_counts)) {
      if (tlCounts.staged_counts[key] !== clCounts.staged_counts[key]) {
        throw new Error(`session pair diverged: staged counts differ for class ${key}`);
      }
    }
    return clCounts.staged_counts;
  }

  async train(scope: TrainScope): Promise<PairTrainResult> {
    const tl = await this.api.train(this.tlId, scope);
    const cl = await this.api.train(this.clId, scope);
    this.log.push({ kind: "train", scope });
    return { tl, cl };
  }

  async reset(): Promise<void> {
    await this.api.reset(this.tlId);
    await this.api.reset(this.clId);
    this.log.push({ kind: "reset" });
  }

  /** Predictions never enter the log: they do not change state. */
  predict(target: "tl" | "cl", sample: Sample): Promise<Prediction> {
    return this.api.predict(target === "tl" ? this.tlId : this.clId, sample);
  }

  clState() {
    return this.api.state(this.clId);
  }

  /** Rebuild a fresh pair and push the recorded command log through it. */
  static async replay(api: ApiClient, options: PairOptions, log: PairCommand[]): Promise<SessionPair> {
    const pair = await SessionPair.create(api, options);
    for (const command of log) {
      if (command.kind === "sample") {
        await pair.addSample(command.cls, command.sample);
      } else if (command.kind === "train") {
        await pair.train(command.scope);
      } else {
        await pair.reset();
      }
    }
    return pair;
  }
}
