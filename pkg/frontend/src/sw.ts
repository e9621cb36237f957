/// <reference lib="webworker" />
/**
 * Service worker shell: applies the ATB queue to outbound API calls.
 *
 * Requests whose URL matches the configured target pattern are held in the
 * FIFO queue and released only when the bucket grants a token; a 429 response
 * halves the rate and retries inside the worker, so the page only ever sees
 * the final outcome. Everything else passes through untouched.
 *
 * Config comes from /sw-atb-config.json at install time; bucket state is
 * persisted to IndexedDB across worker restarts, with an in-memory fallback
 * when storage is unavailable.
 */

import { AtbConfig, AtbState, DEFAULT_CONFIG } from "./atb-core.js";
import { AtbQueue } from "./queue.js";

declare const self: ServiceWorkerGlobalScope;

const CONFIG_PATH = "/sw-atb-config.json";
const DB_NAME = "atb-worker";
const STORE = "state";

interface WorkerConfig extends AtbConfig {
  targetPattern: string;
  persistKey: string;
}

let config: WorkerConfig = {
  ...DEFAULT_CONFIG,
  targetPattern: "/api/",
  persistKey: "default",
};
let queue: AtbQueue | null = null;
let persist = true;

function nowS(): number {
  return Date.now() / 1000;
}

// -- persistence -------------------------------------------------------

function openDb(): Promise<IDBDatabase> {
  return new Promise((resolve, reject) => {
    const req = indexedDB.open(DB_NAME, 1);
    req.onupgradeneeded = () => req.result.createObjectStore(STORE);
    req.onsuccess = () => resolve(req.result);
    req.onerror = () => reject(req.error);
  });
}

async function saveState(state: AtbState): Promise<void> {
  if (!persist) return;
  try {
    const db = await openDb();
    await new Promise<void>((resolve, reject) => {
      const tx = db.transaction(STORE, "readwrite");
      tx.objectStore(STORE).put(state, config.persistKey);
      tx.oncomplete = () => resolve();
      tx.onerror = () => reject(tx.error);
    });
  } catch (err) {
    persist = false; // storage unavailable: carry on in memory
    console.warn("atb-sw: state persistence disabled:", err);
  }
}

async function loadState(): Promise<AtbState | null> {
  try {
    const db = await openDb();
    return await new Promise((resolve, reject) => {
      const tx = db.transaction(STORE, "readonly");
      const req = tx.objectStore(STORE).get(config.persistKey);
      req.onsuccess = () => resolve((req.result as AtbState) ?? null);
      req.onerror = () => reject(req.error);
    });
  } catch (err) {
    persist = false;
    console.warn("atb-sw: state restore skipped:", err);
    return null;
  }
}

// -- queue wiring ------------------------------------------------------

async function ensureQueue(): Promise<AtbQueue> {
  if (queue) return queue;
  queue = new AtbQueue(config, {
    now: nowS,
    setTimer: (delayS, fn) => setTimeout(fn, Math.max(0, delayS * 1000)),
    drawJitter: () => Math.random() - 0.5,
    onState: (state) => void saveState(state),
  });
  const saved = await loadState();
  if (saved) queue.restore(saved);
  return queue;
}

async function paced(request: Request): Promise<Response> {
  const q = await ensureQueue();
  const { value } = await q.submit(async () => {
    const response = await fetch(request.clone());
    return { status: response.status, passthrough: response };
  });
  return value as Response;
}

// -- worker lifecycle --------------------------------------------------

self.addEventListener("install", (event: ExtendableEvent) => {
  event.waitUntil(
    (async () => {
      try {
        const resp = await fetch(CONFIG_PATH, { cache: "no-store" });
        if (resp.ok) {
          config = { ...config, ...(await resp.json()) };
        }
      } catch {
        // keep defaults; the demo page still works
      }
      await self.skipWaiting();
    })(),
  );
});

self.addEventListener("activate", (event: ExtendableEvent) => {
  event.waitUntil(self.clients.claim());
});

self.addEventListener("fetch", (event: FetchEvent) => {
  const url = new URL(event.request.url);
  const matches =
    url.origin === self.location.origin && url.pathname.startsWith(config.targetPattern);
  if (!matches) {
    return; // passthrough: the browser fetches as usual
  }
  event.respondWith(paced(event.request));
});
