/**
 * Browser shell: loads a tree export (file picker or ?tree=<url>), renders one
 * question at a time, and walks the session. Ordinal questions render as
 * level buttons, continuous ones as a numeric input; both validate inline.
 */
import { QuestionnaireSession } from "./session";
import { TreeLoadError } from "./tree";

let session: QuestionnaireSession | null = null;

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function setError(message: string | null): void {
  const box = el<HTMLDivElement>("error");
  box.textContent = message ?? "";
  box.style.display = message ? "block" : "none";
}

function loadFromText(text: string): void {
  try {
    session = QuestionnaireSession.fromJson(text);
    setError(null);
    render();
  } catch (err) {
    session = null;
    setError(err instanceof TreeLoadError ? err.message : `load failed: ${String(err)}`);
    render();
  }
}

function answerValue(value: number): void {
  if (!session) return;
  const outcome = session.answer(value);
  if (!outcome.accepted) {
    setError(outcome.message);
    return;
  }
  setError(null);
  render();
}

function renderWhatIf(value: number): void {
  if (!session) return;
  const preview = session.whatIf(value);
  const box = el<HTMLDivElement>("whatif");
  if ("accepted" in preview) {
    box.textContent = preview.message;
    return;
  }
  box.textContent = preview.complete
    ? `if answered ${value}: finished, probabilities [${preview.classProbs!
        .map((p) => p.toFixed(3))
        .join(", ")}]`
    : `if answered ${value}: next question "${preview.nextQuestion}", ` +
      `at most ${preview.remainingMaxDepth} more after it`;
}

function render(): void {
  const quiz = el<HTMLDivElement>("quiz");
  const trailBox = el<HTMLOListElement>("trail");
  const result = el<HTMLDivElement>("result");
  quiz.replaceChildren();
  trailBox.replaceChildren();
  result.replaceChildren();
  el<HTMLDivElement>("whatif").textContent = "";
  if (!session) return;

  for (const record of session.trail) {
    const item = document.createElement("li");
    item.textContent = `${record.columnName} = ${record.answer} (${record.side})`;
    trailBox.appendChild(item);
  }
  if (session.trail.length > 0) {
    const backButton = document.createElement("button");
    backButton.textContent = "back";
    backButton.onclick = () => {
      session!.back();
      setError(null);
      render();
    };
    quiz.appendChild(backButton);
  }

  if (session.complete) {
    const summary = session.exportSession();
    const headline = document.createElement("h2");
    headline.textContent = `predicted: ${summary.predicted_label}`;
    result.appendChild(headline);
    const probs = document.createElement("p");
    probs.textContent = session
      .classProbs!.map((p, i) => `${session!.doc.schema.classes[i]}: ${p.toFixed(4)}`)
      .join("   ");
    result.appendChild(probs);
    const download = document.createElement("button");
    download.textContent = "export session JSON";
    download.onclick = () => {
      const blob = new Blob([JSON.stringify(summary, null, 1)], {
        type: "application/json",
      });
      const link = document.createElement("a");
      link.href = URL.createObjectURL(blob);
      link.download = "session.json";
      link.click();
    };
    result.appendChild(download);
    return;
  }

  const question = session.currentQuestion()!;
  const heading = document.createElement("h2");
  heading.textContent = `Question ${session.trail.length + 1}: ${question.name}`;
  quiz.appendChild(heading);

  if (question.kind === "ordinal") {
    const bounds = session.columnBounds(question.column);
    for (let level = 0; level < (question.levels ?? 0); level++) {
      const button = document.createElement("button");
      button.textContent = String(level);
      button.disabled = !(level > bounds.lower && level <= bounds.upper);
      button.onclick = () => answerValue(level);
      button.onmouseenter = () => renderWhatIf(level);
      quiz.appendChild(button);
    }
  } else {
    const input = document.createElement("input");
    input.type = "number";
    input.step = "any";
    const bounds = session.columnBounds(question.column);
    input.placeholder = `value in (${bounds.lower}, ${bounds.upper}]`;
    const submit = document.createElement("button");
    submit.textContent = "answer";
    submit.onclick = () => answerValue(Number(input.value));
    const preview = document.createElement("button");
    preview.textContent = "what if?";
    preview.onclick = () => renderWhatIf(Number(input.value));
    quiz.append(input, submit, preview);
  }
}

function boot(): void {
  el<HTMLInputElement>("file").addEventListener("change", (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    file.text().then(loadFromText);
  });
  const fromUrl = new URLSearchParams(window.location.search).get("tree");
  if (fromUrl) {
    fetch(fromUrl)
      .then((response) => response.text())
      .then(loadFromText)
      .catch((err) => setError(`cannot fetch ${fromUrl}: ${String(err)}`));
  }
}

boot();
