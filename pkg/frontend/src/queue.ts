/**
 * FIFO release queue guarding one ATB state.
 *
 * All intercepted requests funnel through a single queue and are *released*
 * in FIFO order, each release waiting for the bucket to grant a token.
 * Responses feed back asynchronously: anything but a 429 runs the increase
 * rule and completes the request; a 429 runs the decrease rule and puts the
 * request back at the head of the queue, so the retry is released under the
 * collapsed rate. Timers and the clock are injected so tests can drive
 * virtual time.
 */

import {
  AtbConfig,
  AtbState,
  acquire,
  decreaseRate,
  increaseRate,
  initialState,
} from "./atb-core.js";

export interface QueueEnv {
  /** current time in seconds */
  now(): number;
  /** schedule a callback after `delayS` seconds */
  setTimer(delayS: number, fn: () => void): void;
  /** draw from Uniform(-0.5, 0.5) for the decrease rule */
  drawJitter(): number;
  /** called after every state transition (persistence hook) */
  onState?(state: AtbState): void;
}

export interface Outcome {
  status: number;
  attempts: number;
  /** seconds between enqueue and the final (successful) release */
  waitedS: number;
}

export interface Settled {
  value: unknown;
  meta: Outcome;
}

interface Job {
  send: () => Promise<{ status: number; passthrough: unknown }>;
  resolve: (outcome: Settled) => void;
  reject: (err: unknown) => void;
  enqueuedAt: number;
  attempts: number;
}

export class AtbQueue {
  private state: AtbState;
  private jobs: Job[] = [];
  private waiting = false;
  /** release timestamps, oldest first; handy for tests and debugging */
  readonly releaseLog: number[] = [];

  constructor(config: AtbConfig, private env: QueueEnv) {
    this.state = initialState(config, env.now());
  }

  snapshot(): AtbState {
    return { ...this.state };
  }

  /** restore persisted state (worker restart); never trusts a future clock */
  restore(state: AtbState): void {
    const now = this.env.now();
    this.state = { ...state, lastRefill: Math.min(state.lastRefill, now) };
  }

  get depth(): number {
    return this.jobs.length;
  }

  /**
   * Queue a request. `send` performs the actual fetch and reports the HTTP
   * status plus the value handed back to the caller once the request finally
   * succeeds (or fails with a non-429 status).
   */
  submit(send: Job["send"]): Promise<Settled> {
    return new Promise((resolve, reject) => {
      this.jobs.push({ send, resolve, reject, enqueuedAt: this.env.now(), attempts: 0 });
      this.pump();
    });
  }

  private transition(next: AtbState): void {
    this.state = next;
    this.env.onState?.(next);
  }

  private pump(): void {
    if (this.waiting) {
      return;
    }
    while (this.jobs.length > 0) {
      const now = this.env.now();
      const result = acquire(this.state, now);
      this.transition(result.state);
      if (!result.granted) {
        this.waiting = true;
        this.env.setTimer(result.readyAt - now, () => {
          this.waiting = false;
          this.pump();
        });
        return;
      }
      const job = this.jobs.shift()!;
      job.attempts += 1;
      this.releaseLog.push(now);
      this.dispatch(job);
    }
  }

  private dispatch(job: Job): void {
    job
      .send()
      .then(({ status, passthrough }) => {
        const done = this.env.now();
        if (status === 429) {
          this.transition(decreaseRate(this.state, done, this.env.drawJitter()));
          this.jobs.unshift(job); // oldest request retries first
          this.pump();
          return;
        }
        this.transition(increaseRate(this.state, done));
        job.resolve({
          value: passthrough,
          meta: { status, attempts: job.attempts, waitedS: done - job.enqueuedAt },
        });
      })
      .catch((err) => job.reject(err));
  }
}
