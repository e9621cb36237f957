// Demo page: fire bursts at the intercepted endpoint and list outcomes.
// All pacing happens in the service worker; this page is a plain consumer.

const status = document.getElementById("status");
const log = document.getElementById("log");
let counter = 0;

async function boot() {
  if (!("serviceWorker" in navigator)) {
    status.textContent = "service workers unavailable in this browser";
    return;
  }
  const registration = await navigator.serviceWorker.register("/sw.js", { type: "module" });
  await navigator.serviceWorker.ready;
  if (!navigator.serviceWorker.controller) {
    status.textContent = "worker installed — reload once so it controls this page";
    return;
  }
  status.textContent = `worker active (scope ${registration.scope})`;
  for (const id of ["burst3", "burst10", "clear"]) {
    document.getElementById(id).disabled = false;
  }
}

function row(id) {
  const tr = document.createElement("tr");
  tr.innerHTML = `<td>#${id}</td><td>queued…</td><td></td><td></td>`;
  log.appendChild(tr);
  return tr;
}

async function fire(n) {
  for (let i = 0; i < n; i++) {
    const id = ++counter;
    const tr = row(id);
    const started = performance.now();
    fetch("/api/multiply", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ a: id, b: 7 }),
    })
      .then(async (resp) => {
        const elapsed = ((performance.now() - started) / 1000).toFixed(2);
        const body = resp.ok ? await resp.json() : {};
        tr.children[1].textContent = resp.status;
        tr.children[1].className = resp.ok ? "ok" : "retry";
        tr.children[2].textContent = resp.ok ? body.result : "—";
        tr.children[3].textContent = elapsed;
      })
      .catch((err) => {
        tr.children[1].textContent = "error";
        tr.children[2].textContent = String(err);
      });
  }
}

document.getElementById("burst3").addEventListener("click", () => fire(3));
document.getElementById("burst10").addEventListener("click", () => fire(10));
document.getElementById("clear").addEventListener("click", () => (log.innerHTML = ""));

boot();
