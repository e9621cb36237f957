/**
 * Pure adaptive-token-bucket state machine.
 *
 * Framework-free so it can be tested outside the browser and held to the
 * reference implementation by the golden transition fixtures in
 * ../fixtures/atb-transitions.json (exact numeric agreement at EPSILON).
 *
 * Rates are carried in tokens per minute, matching the shipped profiles;
 * refill arithmetic runs in tokens per second. A bucket is a plain value:
 * every transition returns a new state.
 */

export const EPSILON = 1e-9;

export interface AtbState {
  bucketSize: number;
  tokens: number;
  ratePm: number;
  lastRefill: number;
  lastCongestionPm: number;
  sigmaPm: number;
  deltaPm: number;
  alpha: number;
  beta: number;
}

export interface AcquireResult {
  state: AtbState;
  /** instant the send may happen; equals `now` when granted */
  readyAt: number;
  /** true when a token was consumed and the caller must send now */
  granted: boolean;
}

/** tokens/minute -> tokens/second, mirroring the reference unit convention */
function perSecond(ratePm: number): number {
  return ratePm / 60.0;
}

/**
 * Per-minute rate as the reference reads it back from per-second storage.
 * The /60*60 round trip is intentional: it reproduces the exact doubles the
 * fixtures were generated with.
 */
function roundTripPm(ratePm: number): number {
  return perSecond(ratePm) * 60.0;
}

export function refill(state: AtbState, now: number): AtbState {
  if (now < state.lastRefill) {
    throw new Error(`clock regression: now=${now} < lastRefill=${state.lastRefill}`);
  }
  const tokens = Math.min(
    state.bucketSize,
    state.tokens + (now - state.lastRefill) * perSecond(state.ratePm),
  );
  return { ...state, tokens, lastRefill: now };
}

/** Take one token now, or report when one will be available. */
export function acquire(state: AtbState, now: number): AcquireResult {
  const refilled = refill(state, now);
  if (refilled.tokens >= 1.0 - EPSILON) {
    return {
      state: { ...refilled, tokens: Math.max(0.0, refilled.tokens - 1.0) },
      readyAt: now,
      granted: true,
    };
  }
  return {
    state: refilled,
    readyAt: now + (1.0 - refilled.tokens) / perSecond(refilled.ratePm),
    granted: false,
  };
}

/** Success: grow the rate, faster while below the remembered congestion rate. */
export function increaseRate(state: AtbState, now: number): AtbState {
  const refilled = refill(state, now);
  const r = roundTripPm(refilled.ratePm);
  const gain = r < refilled.lastCongestionPm ? refilled.alpha : refilled.beta;
  const nextPm = Math.max(r + refilled.deltaPm, r * gain);
  return { ...refilled, ratePm: roundTripPm(nextPm) };
}

/**
 * HTTP 429: remember where congestion started, drop the tokens, and collapse
 * the rate to max(sigma + u, rate/2) with u drawn from Uniform(-0.5, 0.5).
 * The draw is a parameter so replay and conformance stay deterministic.
 */
export function decreaseRate(state: AtbState, now: number, u: number): AtbState {
  const refilled = refill(state, now);
  const r = roundTripPm(refilled.ratePm);
  const nextPm = Math.max(refilled.sigmaPm + u, r / 2.0);
  return {
    ...refilled,
    lastCongestionPm: r,
    tokens: 0.0,
    ratePm: roundTripPm(nextPm),
  };
}

export interface AtbConfig {
  bucketSize: number;
  initialTokens: number;
  initialRatePm: number;
  initialCongestionPm: number;
  sigmaPm: number;
  deltaPm: number;
  alpha: number;
  beta: number;
}

export const DEFAULT_CONFIG: AtbConfig = {
  bucketSize: 15,
  initialTokens: 1,
  initialRatePm: 15,
  initialCongestionPm: 30,
  sigmaPm: 0.6,
  deltaPm: 0.6,
  alpha: 1.2,
  beta: 1.2,
};

export function initialState(config: AtbConfig, now: number): AtbState {
  return {
    bucketSize: config.bucketSize,
    tokens: Math.min(config.initialTokens, config.bucketSize),
    ratePm: config.initialRatePm,
    lastRefill: now,
    lastCongestionPm: config.initialCongestionPm,
    sigmaPm: config.sigmaPm,
    deltaPm: config.deltaPm,
    alpha: config.alpha,
    beta: config.beta,
  };
}
