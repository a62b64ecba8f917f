"""Prompt templates for refinement, per-page judging, VQA, and answer standardization.

Templates are kept verbatim, including trailing spaces inside some lines, so
rendered prompts are byte-stable and golden-testable. Placeholders are unique
tokens substituted with ``str.replace`` (several templates contain literal
JSON braces, so ``str.format`` is not usable).
"""

from __future__ import annotations

REFINEMENT_TEMPLATE = """\
You are given two questions. The first one is the original one, the second one is the corrupted one.
The corruption is done based on entities extracted from the original question.

Original question: "{original_question}"
Corrupted question: "{corrupted_question}"

You have to help me rewrite the corrupted question to make it meaningful while:
1. Making it coherent and natural, while strictly keeping the exact same meaning
2. Ensuring it makes sense in the context of the original question
3. The following corrupted entities must be preserved in the rewritten question: {corrupted_entities}
4. Editing the question minimally - only what's needed to make it coherent
5. Guaranteeing that the final output is meaningful

Original: "What is the highest temperature recorded?"
Bad corruption: "What is the 85 F temperature recorded?"
Correct rewrite: "Was 85 F the highest temperature recorded?"

Good Examples:
Original: "Which year is mentioned first in the x axis?"
Bad corruption: "Which 1975 is mentioned first in the x axis?"
Good rewrite: "Is 1975 the first year mentioned in the x axis?"

Original: "Which company had the most sales in 2022?"
Bad corruption: "Which Microsoft had the most sales in 2022?"
Correct rewrite: "Did Microsoft have the most sales in 2022?"

Important: Return only the rewritten question without any explanation or introductions.\
"""

# Trailing spaces inside the judge and standardization templates are part of
# the template text; do not strip them.
JUDGE_TEMPLATE = (
    "You are an expert in Visual Question Answering on Document images. \n"
    "We are working on a project to verify the answerability of questions based on the information provided in a given image. \n"
    "In detail we have taken questions from a multipage VQA dataset and we have corrupted the questions based on the entities found in the whole document associated to the question. \n"
    "Now, given the corrupted question and each image of the document, we want to verify if the question is answerable based solely on the information provided in the given image. \n"
    "Your task is to help us to determine if the following corrupted question is answerable based solely on the information provided in the given image. \n"
    "The question answer must be explicitly stated in the image. \n"
    "In order to have a better document understanding, we extracted the following OCR text from the document:\n{ocr_text}\n"
    "\n"
    "In addition here we provide the original entities found in the question and the corrupted ones in order to allow you to place special focus on the corrupted ones. The entities are reported with the format: ORIGINAL --> CORRUPTED:\n{entities_string}\n"
    "\n"
    "Respond with a structured response in JSON format with the following fields:\n"
    "{\n"
    '    "verification_result": "true if the question is answerable based solely on the information provided in the given image, or \'false\' if it\'s not answerable",\n'
    '    "question_answer": "The answer to the question or only the words \'not found\' if the answer is not explicitly stated in the image"\n'
    "}\n"
    "Return only the JSON response. Without any other text or explanation.\n"
    "Question: {question}"
)

VQA_HEADER = (
    "You are an AI assistant specialized in analyzing document images and text.\n"
    "Your task is to answer questions about the document image content precisely.\n"
)
VQA_OCR_LINE = "For this question, you have the following OCR text: {ocr_text}\n"
VQA_GUIDELINES = (
    "Guidelines:\n"
    "- Provide concise, focused answers (single word or short phrase preferred)\n"
    "- Base your answer on both the image and the provided OCR text\n"
)
VQA_EXPLICIT_LINES = (
    "- If uncertain, return 'Unable to determine'\n"
    "- If you can't find the answer, return 'Unable to determine'\n"
)
VQA_QUESTION_LINE = "Question: {question}"

STANDARDIZATION_TEMPLATE = (
    "I'm performing an evaluation test on the ability of different models to answer VQA questions from document images.\n"
    "The model could return different answers to determine if the answer is 'unable to determine' or not. \n"
    "Your task is to detect if the answer means that the model is unable to determine the answer or not. \n"
    "Examples of answers that mean that the model is unable to determine the answer: \n"
    "- Not available. \n"
    "- Not provided in document. \n"
    "- The image does not provide information to answer the question. \n"
    "- I cannot provide an answer based on the given text. \n"
    "- The document does not provide information \n"
    "If the answer means 'unable to determine', respond with 'unable to determine', otherwise return the original answer. \n"
    "The answer is: {answer} \n"
    "Please respond only with the original answer or 'unable to determine' only."
)


def render_refinement_prompt(
    original_question: str, corrupted_question: str, corrupted_entities: list[str]
) -> str:
    return (
        REFINEMENT_TEMPLATE
        .replace("{original_question}", original_question)
        .replace("{corrupted_question}", corrupted_question)
        .replace("{corrupted_entities}", repr(list(corrupted_entities)))
    )


def render_judge_prompt(ocr_text: str, entities_string: str, question: str) -> str:
    return (
        JUDGE_TEMPLATE
        .replace("{ocr_text}", ocr_text)
        .replace("{entities_string}", entities_string)
        .replace("{question}", question)
    )


def render_vqa_prompt(
    question: str, ocr_text: str = "", include_ocr: bool = False, explicit: bool = False
) -> str:
    parts = [VQA_HEADER, "\n"]
    if include_ocr:
        parts += [VQA_OCR_LINE.replace("{ocr_text}", ocr_text), "\n"]
    parts.append(VQA_GUIDELINES)
    if explicit:
        parts.append(VQA_EXPLICIT_LINES)
    parts.append(VQA_QUESTION_LINE.replace("{question}", question))
    return "".join(parts)


def render_standardization_prompt(answer: str) -> str:
    return STANDARDIZATION_TEMPLATE.replace("{answer}", answer)
